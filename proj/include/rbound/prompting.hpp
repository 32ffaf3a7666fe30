#pragma once

// Prompt construction for each reasoning strategy, demo selection, and
// self-consistency vote aggregation.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rbound/benchgen.hpp"
#include "rbound/textconfig.hpp"
#include "rbound/util.hpp"

namespace rbound {

enum class StrategyKind {
    Direct,
    CoT,
    PoT,
    LtMDecompose,
    LtMSolve,
    ComplexCoT,
    MARP,
    MARPpp,
};

inline std::string strategy_name(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::Direct: return "direct";
        case StrategyKind::CoT: return "cot";
        case StrategyKind::PoT: return "pot";
        case StrategyKind::LtMDecompose: return "ltm-decompose";
        case StrategyKind::LtMSolve: return "ltm-solve";
        case StrategyKind::ComplexCoT: return "complex-cot";
        case StrategyKind::MARP: return "marp";
        case StrategyKind::MARPpp: return "marp++";
    }
    throw std::logic_error("bad StrategyKind");
}

inline StrategyKind strategy_from_name(const std::string& s) {
    if (s == "direct") return StrategyKind::Direct;
    if (s == "cot") return StrategyKind::CoT;
    if (s == "pot") return StrategyKind::PoT;
    if (s == "ltm" || s == "ltm-decompose") return StrategyKind::LtMDecompose;
    if (s == "ltm-solve") return StrategyKind::LtMSolve;
    if (s == "complex-cot" || s == "ccot") return StrategyKind::ComplexCoT;
    if (s == "marp") return StrategyKind::MARP;
    if (s == "marp++" || s == "marppp") return StrategyKind::MARPpp;
    throw std::invalid_argument("unknown strategy kind '" + s + "'");
}

struct Strategy {
    StrategyKind kind = StrategyKind::CoT;
    std::map<std::string, double> params;

    double param(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end())
            throw std::invalid_argument("strategy '" + strategy_name(kind) +
                                        "': missing param '" + name + "'");
        return it->second;
    }
    double param_or(const std::string& name, double fallback) const {
        auto it = params.find(name);
        return it == params.end() ? fallback : it->second;
    }
};

struct Demo {
    std::string question;
    std::string solution;
    int step_count = 1;
};

struct DemoSet {
    std::vector<Demo> demos;
    bool empty() const { return demos.empty(); }
    std::size_t size() const { return demos.size(); }
};

enum class Role { System, User, Assistant };

inline std::string role_name(Role r) {
    switch (r) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    throw std::logic_error("bad Role");
}

struct Message {
    Role role;
    std::string content;
    bool operator==(const Message&) const = default;
};

using MessageSeq = std::vector<Message>;

// Sub-question state threaded through the two LtM phases by the harness.
struct LtmContext {
    std::vector<std::pair<std::string, std::string>> solved; // (sub-question, answer)
    std::string sub_question;
};

inline constexpr const char* kAnswerSuffix =
    "End your response with \"The answer is <number>\".";

inline std::string marp_system_text(int step_budget, double mult_cap) {
    return "You need to perform multi-step reasoning, with each step carrying out as many basic "
           "operations as possible. Remember, you can only complete tasks that contain up to " +
           std::to_string(step_budget) +
           " basic operations per step, and multiplication operations must be less than " +
           compact_number(mult_cap) +
           ". The upper limit of the multiplication operations decreases as the number of "
           "operations per step increases.";
}

inline std::string marppp_system_text(int max_global_steps) {
    return "You are required to perform multi-step reasoning, ensuring that each step operates "
           "within clearly defined boundaries:\n"
           "- Global Planning Boundary: Focus on the overall strategy and high-level goal. You "
           "should break down the task into manageable steps (less than " +
           std::to_string(max_global_steps) +
           " steps) within your capabilities but always consider the broader objective to ensure "
           "coherence in the approach.\n"
           "- Local Step Operation Boundary: In each step, perform as many basic operations as "
           "possible, but each step must adhere to a limit of 5 basic operations. Avoid exceeding "
           "this boundary to maintain clarity and precision at each stage.\n"
           "- Multimodal Perception Boundary: When reasoning, incorporate all available "
           "information (text, images, etc. if available) without overstepping the boundaries of "
           "what can be processed in one step. Make sure to integrate the relevant modalities "
           "effectively within the defined operation limits. If perception is very difficult, "
           "please divide it into multiple steps for multimodal perception.\n"
           "- Domain-Knowledge Boundary: Utilize your domain knowledge effectively but ensure "
           "that each step remains grounded within your expertise. Do not go beyond what is "
           "strictly necessary for the current step.";
}

namespace detail {

inline void append_demos(MessageSeq& seq, const DemoSet& demos) {
    for (const auto& d : demos.demos) {
        seq.push_back({Role::User, d.question});
        seq.push_back({Role::Assistant, d.solution});
    }
}

} // namespace detail

inline MessageSeq build_prompt(const Strategy& strategy, const std::string& question,
                               const DemoSet& demos, const LtmContext& ltm = {}) {
    MessageSeq seq;
    switch (strategy.kind) {
        case StrategyKind::Direct:
            // direct-answer probe: no rationale, no demos
            seq.push_back({Role::User,
                           question + "\n\nGive only the final numeric answer, without any "
                                      "reasoning steps or explanation."});
            break;
        case StrategyKind::CoT:
            detail::append_demos(seq, demos);
            seq.push_back({Role::User, question + "\n\n" + kAnswerSuffix});
            break;
        case StrategyKind::PoT:
            detail::append_demos(seq, demos);
            seq.push_back(
                {Role::User,
                 question +
                     "\n\nWrite a program that computes the result; its final printed value must "
                     "be the answer. Then state the final value. " +
                     kAnswerSuffix});
            break;
        case StrategyKind::ComplexCoT:
            strategy.param("target_demo_steps"); // required by the kind
            detail::append_demos(seq, demos);
            seq.push_back({Role::User, question + "\n\n" + kAnswerSuffix});
            break;
        case StrategyKind::MARP: {
            int budget = static_cast<int>(strategy.param("step_budget"));
            double cap = strategy.param("mult_cap");
            seq.push_back({Role::System, marp_system_text(budget, cap)});
            detail::append_demos(seq, demos);
            seq.push_back({Role::User, question + "\n\n" + kAnswerSuffix});
            break;
        }
        case StrategyKind::MARPpp: {
            int global_steps = static_cast<int>(strategy.param("max_global_steps"));
            seq.push_back({Role::System, marppp_system_text(global_steps)});
            seq.push_back({Role::User, question + "\n\n" + kAnswerSuffix});
            break;
        }
        case StrategyKind::LtMDecompose:
            seq.push_back({Role::User,
                           question +
                               "\n\nBreak this problem into a numbered list of simpler "
                               "sub-questions, one per line, in the order they should be solved. "
                               "Do not solve them."});
            break;
        case StrategyKind::LtMSolve: {
            if (ltm.sub_question.empty())
                throw std::invalid_argument("ltm-solve: missing sub_question context");
            std::string content = question;
            if (!ltm.solved.empty()) {
                content += "\n\nAnswers so far:";
                for (const auto& [sq, ans] : ltm.solved)
                    content += "\n- " + sq + " -> " + ans;
            }
            content += "\n\nNow answer only this sub-question: " + ltm.sub_question + "\n\n" +
                       kAnswerSuffix;
            seq.push_back({Role::User, content});
            break;
        }
    }
    return seq;
}

inline MessageSeq build_prompt(const Strategy& strategy, const ProblemInstance& instance,
                               const DemoSet& demos, const LtmContext& ltm = {}) {
    return build_prompt(strategy, instance.question, demos, ltm);
}

// ---- demo selection ----

struct DemoCriterion {
    enum class Kind { Fixed, ByStepCount } kind = Kind::Fixed;
    int target_steps = 1;
    std::size_t demo_count = 3;
};

inline DemoSet select_demos(const DemoSet& pool, const DemoCriterion& criterion) {
    if (pool.empty()) throw std::invalid_argument("select_demos: demo pool is empty");
    if (criterion.demo_count > pool.size())
        throw std::invalid_argument("select_demos: demo_count exceeds pool size");
    DemoSet out;
    if (criterion.kind == DemoCriterion::Kind::Fixed) {
        out.demos.assign(pool.demos.begin(),
                         pool.demos.begin() + static_cast<std::ptrdiff_t>(criterion.demo_count));
        return out;
    }
    if (criterion.target_steps < 1)
        throw std::invalid_argument("select_demos: target_steps must be >= 1");
    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        int da = std::abs(pool.demos[a].step_count - criterion.target_steps);
        int db = std::abs(pool.demos[b].step_count - criterion.target_steps);
        if (da != db) return da < db;
        return pool.demos[a].step_count < pool.demos[b].step_count; // tie -> fewer steps
    });
    for (std::size_t i = 0; i < criterion.demo_count; ++i) out.demos.push_back(pool.demos[order[i]]);
    return out;
}

inline DemoSet load_demo_pool(std::istream& in) {
    DemoSet pool;
    for (const auto& sec : parse_config(in)) {
        if (sec.kind != "demo")
            throw ConfigError("line " + std::to_string(sec.line) + ": expected [demo <id>]");
        Demo d;
        d.question = sec.get("question");
        d.solution = sec.get("solution");
        d.step_count = std::stoi(sec.get("steps"));
        if (d.step_count < 1)
            throw ConfigError("demo '" + sec.name + "': steps must be >= 1");
        pool.demos.push_back(std::move(d));
    }
    return pool;
}

inline DemoSet load_demo_pool_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open demo pool file: " + path);
    return load_demo_pool(in);
}

// ---- self-consistency aggregation ----

struct ScResult {
    BigInt answer;
    std::vector<std::pair<BigInt, int>> tally; // first-occurrence order
};

inline ScResult aggregate_sc(const std::vector<BigInt>& answers) {
    if (answers.empty()) throw std::invalid_argument("aggregate_sc: empty answer list");
    ScResult res;
    for (const auto& a : answers) {
        bool seen = false;
        for (auto& [value, count] : res.tally) {
            if (value == a) {
                ++count;
                seen = true;
                break;
            }
        }
        if (!seen) res.tally.emplace_back(a, 1);
    }
    int best = 0;
    for (const auto& [value, count] : res.tally) {
        if (count > best) { // strict: ties keep the earliest occurrence
            best = count;
            res.answer = value;
        }
    }
    return res;
}

// Rendered-prompt audit export: one JSON object per message sequence.
inline void write_prompts_jsonl(std::ostream& out, const std::vector<MessageSeq>& prompts) {
    for (const auto& seq : prompts) {
        Json j = Json::array();
        for (const auto& m : seq) {
            Json msg;
            msg["role"] = role_name(m.role);
            msg["content"] = m.content;
            j.push_back(std::move(msg));
        }
        out << j.dump() << "\n";
    }
}

} // namespace rbound
