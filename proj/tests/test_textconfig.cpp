#include <catch2/catch_amalgamated.hpp>

#include "rbound/textconfig.hpp"

using namespace rbound;

TEST_CASE("parses sections, keys and comments") {
    std::string text =
        "# leading comment\n"
        "[template alpha]\n"
        "intro = A value with = signs and # inside\n"
        "step = add x :: text\n"
        "step = mul y :: more\n"
        "\n"
        "[demo]\n"
        "question = q\n";
    auto sections = parse_config_string(text);
    REQUIRE(sections.size() == 2);
    CHECK(sections[0].kind == "template");
    CHECK(sections[0].name == "alpha");
    CHECK(sections[0].line == 2);
    CHECK(sections[0].get("intro") == "A value with = signs and # inside");
    CHECK(sections[0].get_all("step").size() == 2);
    CHECK(sections[1].kind == "demo");
    CHECK(sections[1].name.empty());
    CHECK(sections[1].get_or("missing", "fallback") == "fallback");
}

TEST_CASE("repeated keys preserve order") {
    auto sections = parse_config_string("[s]\nk = first\nk = second\nk = third\n");
    auto all = sections[0].get_all("k");
    REQUIRE(all.size() == 3);
    CHECK(all[0] == "first");
    CHECK(all[2] == "third");
    CHECK(sections[0].get("k") == "first");
}

TEST_CASE("errors carry line numbers") {
    CHECK_THROWS_WITH(parse_config_string("[s]\nnot an entry\n"),
                      Catch::Matchers::ContainsSubstring("line 2"));
    CHECK_THROWS_WITH(parse_config_string("[unterminated\n"),
                      Catch::Matchers::ContainsSubstring("line 1"));
    CHECK_THROWS_WITH(parse_config_string("key = before header\n"),
                      Catch::Matchers::ContainsSubstring("before any section"));
    CHECK_THROWS_AS(parse_config_string("[s]\n = novalue\n"), ConfigError);
}

TEST_CASE("missing key is a loud error") {
    auto sections = parse_config_string("[s name]\na = 1\n");
    CHECK_THROWS_WITH(sections[0].get("b"), Catch::Matchers::ContainsSubstring("'b'"));
}

TEST_CASE("serialize/parse round trip") {
    ConfigSection sec;
    sec.kind = "model";
    sec.name = "m1";
    sec.entries = {{"dim", "steps load 1 0"}, {"dim", "calc load 2 0"}, {"z", "0.5"}};
    std::string text = serialize_config({sec});
    auto back = parse_config_string(text);
    REQUIRE(back.size() == 1);
    CHECK(back[0].kind == "model");
    CHECK(back[0].name == "m1");
    CHECK(back[0].entries == sec.entries);
}
