#pragma once

// Deterministic synthesis of multi-step arithmetic word problems with
// controlled step counts and calculation magnitudes, plus the exact
// ground-truth engine for them.

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rbound/difficulty.hpp"
#include "rbound/textconfig.hpp"
#include "rbound/util.hpp"

namespace rbound {

using BigInt = boost::multiprecision::cpp_int;
using Json = nlohmann::ordered_json;

struct GenError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class OpKind { Add, Sub, Mul };

inline std::string op_name(OpKind op) {
    switch (op) {
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
    }
    throw std::logic_error("bad OpKind");
}

inline OpKind op_from_name(const std::string& s) {
    if (s == "add") return OpKind::Add;
    if (s == "sub") return OpKind::Sub;
    if (s == "mul") return OpKind::Mul;
    throw GenError("unknown operation kind '" + s + "'");
}

// One loopable segment: applies `op` between the running value and one
// fresh operand drawn for `operand_slot`.
struct Segment {
    OpKind op;
    std::string operand_slot;
    std::string text; // contains "[operand_slot]"
};

struct IntRange {
    std::int64_t lo = 1;
    std::int64_t hi = 1;
    bool empty() const { return hi < lo; }
};

struct ProblemTemplate {
    std::string id;
    std::string intro;
    std::vector<Segment> loop_body;
    std::string question;
    // declaration order preserved
    std::vector<std::pair<std::string, IntRange>> var_domains;

    bool has_var(const std::string& slot) const {
        for (const auto& v : var_domains)
            if (v.first == slot) return true;
        return false;
    }
    IntRange var_domain(const std::string& slot) const {
        for (const auto& v : var_domains)
            if (v.first == slot) return v.second;
        throw GenError("template '" + id + "': unknown slot '" + slot + "'");
    }
};

namespace detail {

// All "[slot]" markers in a piece of template text.
inline std::vector<std::string> slots_in(const std::string& text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while ((pos = text.find('[', pos)) != std::string::npos) {
        std::size_t end = text.find(']', pos);
        if (end == std::string::npos) break;
        out.push_back(text.substr(pos + 1, end - pos - 1));
        pos = end + 1;
    }
    return out;
}

inline std::string replace_all(std::string text, const std::string& marker,
                               const std::string& value) {
    std::size_t pos = 0;
    while ((pos = text.find(marker, pos)) != std::string::npos) {
        text.replace(pos, marker.size(), value);
        pos += value.size();
    }
    return text;
}

} // namespace detail

// Binding key for the operand of step `s` (0-based). The first pass through
// the loop body uses plain slot names; later passes suffix the occurrence so
// each step consumes a fresh operand.
inline std::string step_slot_key(const ProblemTemplate& tmpl, std::size_t step) {
    const Segment& seg = tmpl.loop_body[step % tmpl.loop_body.size()];
    std::size_t occurrence = step / tmpl.loop_body.size();
    if (occurrence == 0) return seg.operand_slot;
    return seg.operand_slot + "#" + std::to_string(occurrence + 1);
}

inline void validate_template(const ProblemTemplate& tmpl) {
    if (tmpl.id.empty()) throw GenError("template with empty id");
    if (tmpl.loop_body.empty())
        throw GenError("template '" + tmpl.id + "': loop_body is empty");
    std::set<std::string> declared;
    for (const auto& v : tmpl.var_domains) {
        if (!declared.insert(v.first).second)
            throw GenError("template '" + tmpl.id + "': duplicate var '" + v.first + "'");
        if (v.second.empty())
            throw GenError("template '" + tmpl.id + "': empty range for var '" + v.first + "'");
    }
    auto check_text = [&](const std::string& text, const std::string& where) {
        for (const auto& slot : detail::slots_in(text)) {
            if (!declared.count(slot))
                throw GenError("template '" + tmpl.id + "': " + where +
                               " references undeclared slot '" + slot + "'");
        }
    };
    check_text(tmpl.intro, "intro");
    check_text(tmpl.question, "question");
    for (std::size_t i = 0; i < tmpl.loop_body.size(); ++i) {
        const Segment& seg = tmpl.loop_body[i];
        if (!declared.count(seg.operand_slot))
            throw GenError("template '" + tmpl.id + "': segment " + std::to_string(i + 1) +
                           " operand slot '" + seg.operand_slot + "' is undeclared");
        auto slots = detail::slots_in(seg.text);
        std::size_t own = 0;
        for (const auto& s : slots) {
            if (s == seg.operand_slot)
                ++own;
            else
                throw GenError("template '" + tmpl.id + "': segment " + std::to_string(i + 1) +
                               " may only reference its operand slot, found '[" + s + "]'");
        }
        if (own == 0)
            throw GenError("template '" + tmpl.id + "': segment " + std::to_string(i + 1) +
                           " text does not reference '[" + seg.operand_slot + "]'");
    }
}

struct TemplateSet {
    std::vector<ProblemTemplate> templates;

    const ProblemTemplate& find(const std::string& id) const {
        for (const auto& t : templates)
            if (t.id == id) return t;
        throw GenError("unknown template id '" + id + "'");
    }
    std::size_t size() const { return templates.size(); }
};

inline TemplateSet load_templates(std::istream& in) {
    TemplateSet set;
    std::set<std::string> ids;
    for (const auto& sec : parse_config(in)) {
        if (sec.kind != "template")
            throw GenError("line " + std::to_string(sec.line) + ": expected [template <id>], got [" +
                           sec.kind + "]");
        ProblemTemplate tmpl;
        tmpl.id = sec.name;
        if (!ids.insert(tmpl.id).second)
            throw GenError("duplicate template id '" + tmpl.id + "'");
        for (const auto& [key, value] : sec.entries) {
            if (key == "intro") {
                tmpl.intro = value;
            } else if (key == "question") {
                tmpl.question = value;
            } else if (key == "step") {
                std::size_t sep = value.find("::");
                if (sep == std::string::npos)
                    throw GenError("template '" + tmpl.id + "': step must be '<op> <slot> :: <text>'");
                std::istringstream head(value.substr(0, sep));
                std::string op, slot;
                head >> op >> slot;
                if (op.empty() || slot.empty())
                    throw GenError("template '" + tmpl.id + "': step must be '<op> <slot> :: <text>'");
                Segment seg;
                seg.op = op_from_name(op);
                seg.operand_slot = slot;
                seg.text = detail::trim(value.substr(sep + 2));
                tmpl.loop_body.push_back(std::move(seg));
            } else if (key == "var") {
                std::istringstream vs(value);
                std::string slot;
                std::int64_t lo = 0, hi = 0;
                if (!(vs >> slot >> lo >> hi))
                    throw GenError("template '" + tmpl.id + "': var must be '<slot> <lo> <hi>'");
                tmpl.var_domains.emplace_back(slot, IntRange{lo, hi});
            } else {
                throw GenError("template '" + tmpl.id + "': unknown key '" + key + "'");
            }
        }
        validate_template(tmpl);
        set.templates.push_back(std::move(tmpl));
    }
    return set;
}

inline TemplateSet load_templates_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw GenError("cannot open template file: " + path);
    return load_templates(in);
}

inline std::string serialize_templates(const TemplateSet& set) {
    std::vector<ConfigSection> sections;
    for (const auto& tmpl : set.templates) {
        ConfigSection sec;
        sec.kind = "template";
        sec.name = tmpl.id;
        sec.entries.emplace_back("intro", tmpl.intro);
        for (const auto& seg : tmpl.loop_body)
            sec.entries.emplace_back("step", op_name(seg.op) + " " + seg.operand_slot + " :: " + seg.text);
        sec.entries.emplace_back("question", tmpl.question);
        for (const auto& v : tmpl.var_domains)
            sec.entries.emplace_back("var", v.first + " " + std::to_string(v.second.lo) + " " +
                                                std::to_string(v.second.hi));
        sections.push_back(std::move(sec));
    }
    return serialize_config(sections);
}

struct ProblemInstance {
    std::string id;
    std::string question;
    BigInt ground_truth;
    std::vector<std::pair<std::string, std::int64_t>> bindings; // draw order
    std::string template_id;
    std::uint64_t seed = 0;
    DifficultyVector difficulty;

    std::int64_t binding(const std::string& key) const {
        for (const auto& b : bindings)
            if (b.first == key) return b.second;
        throw GenError("instance '" + id + "': missing binding for slot '" + key + "'");
    }
    bool has_binding(const std::string& key) const {
        for (const auto& b : bindings)
            if (b.first == key) return true;
        return false;
    }
};

struct ChainResult {
    BigInt final_value;
    std::vector<BigInt> intermediates; // running value after each step
    BigInt max_calc = 1;               // max |product| over mul steps, 1 if none
};

// Pure ground-truth engine: applies the first `steps` segments to a running
// value starting at 0.
template <typename BindingLookup>
ChainResult eval_chain_with(const ProblemTemplate& tmpl, std::size_t steps,
                            BindingLookup&& lookup) {
    if (steps < 1) throw GenError("eval_chain: steps must be >= 1");
    ChainResult res;
    BigInt value = 0;
    for (std::size_t s = 0; s < steps; ++s) {
        const Segment& seg = tmpl.loop_body[s % tmpl.loop_body.size()];
        BigInt operand = lookup(step_slot_key(tmpl, s));
        switch (seg.op) {
            case OpKind::Add: value += operand; break;
            case OpKind::Sub: value -= operand; break;
            case OpKind::Mul: {
                value *= operand;
                BigInt mag = abs(value);
                if (mag > res.max_calc) res.max_calc = mag;
                break;
            }
        }
        res.intermediates.push_back(value);
    }
    res.final_value = value;
    return res;
}

inline ChainResult eval_chain(const ProblemTemplate& tmpl, std::size_t steps,
                              const std::map<std::string, std::int64_t>& bindings) {
    return eval_chain_with(tmpl, steps, [&](const std::string& key) -> BigInt {
        auto it = bindings.find(key);
        if (it == bindings.end())
            throw GenError("eval_chain: missing binding for slot '" + key + "'");
        return it->second;
    });
}

inline ChainResult eval_chain(const ProblemTemplate& tmpl, std::size_t steps,
                              const ProblemInstance& inst) {
    return eval_chain_with(tmpl, steps,
                           [&](const std::string& key) -> BigInt { return inst.binding(key); });
}

// Uniform integer draw with a platform-stable reduction.
inline std::int64_t draw_uniform(std::mt19937_64& rng, const IntRange& range) {
    std::uint64_t span = static_cast<std::uint64_t>(range.hi - range.lo) + 1;
    return range.lo + static_cast<std::int64_t>(rng() % span);
}

inline ProblemInstance instantiate(const ProblemTemplate& tmpl, std::size_t steps,
                                   const IntRange& numeric_range, std::uint64_t seed) {
    if (steps < 1) throw GenError("instantiate: steps must be >= 1");
    if (numeric_range.empty() || numeric_range.lo < 1)
        throw GenError("instantiate: numeric_range must be non-empty with lower bound >= 1");

    ProblemInstance inst;
    inst.template_id = tmpl.id;
    inst.seed = seed;
    inst.id = tmpl.id + ":" + std::to_string(seed);

    std::mt19937_64 rng(seed);
    // operand slots in step order, then remaining declared vars
    for (std::size_t s = 0; s < steps; ++s) {
        std::string key = step_slot_key(tmpl, s);
        const IntRange& domain = tmpl.var_domain(tmpl.loop_body[s % tmpl.loop_body.size()].operand_slot);
        IntRange effective{std::max(domain.lo, numeric_range.lo), std::min(domain.hi, numeric_range.hi)};
        if (effective.empty())
            throw GenError("instantiate: slot '" + key + "' domain does not intersect numeric_range");
        inst.bindings.emplace_back(key, draw_uniform(rng, effective));
    }
    for (const auto& [slot, domain] : tmpl.var_domains) {
        bool is_operand = false;
        for (const auto& seg : tmpl.loop_body)
            if (seg.operand_slot == slot) is_operand = true;
        if (!is_operand) inst.bindings.emplace_back(slot, draw_uniform(rng, domain));
    }

    ChainResult chain = eval_chain(tmpl, steps, inst);
    inst.ground_truth = chain.final_value;
    inst.difficulty.set("plan_steps", static_cast<double>(steps));
    inst.difficulty.set("max_calc", chain.max_calc.convert_to<double>());

    // render: intro, step segments in order, question
    std::string text = tmpl.intro;
    for (std::size_t s = 0; s < steps; ++s) {
        const Segment& seg = tmpl.loop_body[s % tmpl.loop_body.size()];
        std::string rendered = detail::replace_all(
            seg.text, "[" + seg.operand_slot + "]", std::to_string(inst.binding(step_slot_key(tmpl, s))));
        text += " " + rendered;
    }
    std::string q = tmpl.question;
    for (const auto& [slot, value] : inst.bindings) {
        text = detail::replace_all(text, "[" + slot + "]", std::to_string(value));
        q = detail::replace_all(q, "[" + slot + "]", std::to_string(value));
    }
    inst.question = text + " " + q;
    if (inst.question.find('[') != std::string::npos &&
        inst.question.find(']', inst.question.find('[')) != std::string::npos)
        throw GenError("instantiate: unresolved slot marker in rendered question for template '" +
                       tmpl.id + "'");
    return inst;
}

inline DifficultyVector difficulty_of(const ProblemTemplate& tmpl, const ProblemInstance& inst) {
    std::size_t steps = static_cast<std::size_t>(inst.difficulty.get("plan_steps"));
    ChainResult chain = eval_chain(tmpl, steps, inst);
    DifficultyVector d;
    d.set("plan_steps", static_cast<double>(steps));
    d.set("max_calc", chain.max_calc.convert_to<double>());
    return d;
}

struct MagnitudeStratum {
    double lo = 1;  // inclusive
    double hi = 0;  // exclusive
};

struct SuiteConfig {
    TemplateSet templates;
    std::size_t step_lo = 2;
    std::size_t step_hi = 6;
    std::vector<MagnitudeStratum> magnitude_strata;
    std::size_t per_cell = 10;
    IntRange numeric_range{1, 100000};
    std::uint64_t seed = 0;
    std::size_t retry_budget = 10000;
};

namespace detail {

// Proposal ladder for stratum rejection sampling: shrinking operand ranges
// so low-magnitude cells stay reachable at high step counts.
inline std::vector<std::int64_t> range_ladder(const IntRange& range) {
    std::vector<std::int64_t> rungs;
    std::int64_t h = range.hi;
    while (h > std::max<std::int64_t>(range.lo, 10)) {
        rungs.push_back(h);
        h /= 3;
    }
    rungs.push_back(std::max<std::int64_t>(range.lo, std::min<std::int64_t>(range.hi, 10)));
    return rungs;
}

} // namespace detail

inline std::vector<ProblemInstance> generate_suite(const SuiteConfig& config) {
    if (config.per_cell < 1) throw GenError("generate_suite: per_cell must be >= 1");
    if (config.templates.templates.empty()) throw GenError("generate_suite: no templates");
    if (config.step_hi < config.step_lo) throw GenError("generate_suite: empty step range");
    if (config.magnitude_strata.empty()) throw GenError("generate_suite: no magnitude strata");
    for (std::size_t i = 0; i < config.magnitude_strata.size(); ++i) {
        const auto& a = config.magnitude_strata[i];
        if (!(a.lo < a.hi)) throw GenError("generate_suite: degenerate stratum");
        for (std::size_t j = i + 1; j < config.magnitude_strata.size(); ++j) {
            const auto& b = config.magnitude_strata[j];
            if (a.lo < b.hi && b.lo < a.hi)
                throw GenError("generate_suite: overlapping magnitude strata");
        }
    }

    std::vector<std::int64_t> rungs = detail::range_ladder(config.numeric_range);
    std::vector<ProblemInstance> out;
    for (std::size_t steps = config.step_lo; steps <= config.step_hi; ++steps) {
        for (std::size_t si = 0; si < config.magnitude_strata.size(); ++si) {
            const MagnitudeStratum& stratum = config.magnitude_strata[si];
            for (std::size_t j = 0; j < config.per_cell; ++j) {
                const ProblemTemplate& tmpl =
                    config.templates.templates[j % config.templates.templates.size()];
                bool found = false;
                for (std::size_t attempt = 0; attempt < config.retry_budget && !found; ++attempt) {
                    IntRange proposal{config.numeric_range.lo, rungs[attempt % rungs.size()]};
                    std::uint64_t inst_seed = mix64(config.seed, steps, si, j, attempt);
                    ProblemInstance inst = instantiate(tmpl, steps, proposal, inst_seed);
                    double mc = inst.difficulty.get("max_calc");
                    if (mc >= stratum.lo && mc < stratum.hi) {
                        inst.id = "s" + std::to_string(steps) + "-m" + std::to_string(si) + "-" +
                                  std::to_string(j);
                        out.push_back(std::move(inst));
                        found = true;
                    }
                }
                if (!found)
                    throw GenError("generate_suite: stratum unreachable within retry budget for cell "
                                   "(steps=" +
                                   std::to_string(steps) + ", stratum=[" + std::to_string(stratum.lo) +
                                   "," + std::to_string(stratum.hi) + "), instance " +
                                   std::to_string(j) + ")");
            }
        }
    }
    return out;
}

// ---- suite JSON Lines serialization ----

inline constexpr const char* kSuiteSchema = "rbound-suite/1";

inline Json instance_to_json(const ProblemInstance& inst) {
    Json j;
    j["id"] = inst.id;
    j["template_id"] = inst.template_id;
    j["seed"] = inst.seed;
    j["question"] = inst.question;
    j["ground_truth"] = inst.ground_truth.str();
    Json b = Json::object();
    for (const auto& [slot, value] : inst.bindings) b[slot] = value;
    j["bindings"] = std::move(b);
    Json d = Json::object();
    for (const auto& [name, value] : inst.difficulty.entries()) d[name] = value;
    j["difficulty"] = std::move(d);
    return j;
}

inline ProblemInstance instance_from_json(const Json& j) {
    ProblemInstance inst;
    inst.id = j.at("id").get<std::string>();
    inst.template_id = j.at("template_id").get<std::string>();
    inst.seed = j.at("seed").get<std::uint64_t>();
    inst.question = j.at("question").get<std::string>();
    inst.ground_truth = BigInt(j.at("ground_truth").get<std::string>());
    for (const auto& [slot, value] : j.at("bindings").items())
        inst.bindings.emplace_back(slot, value.get<std::int64_t>());
    for (const auto& [name, value] : j.at("difficulty").items())
        inst.difficulty.set(name, value.get<double>());
    return inst;
}

inline void write_suite(std::ostream& out, const std::vector<ProblemInstance>& suite) {
    Json header;
    header["schema"] = kSuiteSchema;
    out << header.dump() << "\n";
    for (const auto& inst : suite) out << instance_to_json(inst).dump() << "\n";
}

inline std::vector<ProblemInstance> read_suite(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw GenError("suite file is empty");
    Json header = Json::parse(line);
    if (header.value("schema", "") != kSuiteSchema)
        throw GenError("suite file has unknown schema");
    std::vector<ProblemInstance> out;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        out.push_back(instance_from_json(Json::parse(line)));
    }
    return out;
}

} // namespace rbound
