#pragma once

// Reasoning-boundary estimation from binned correctness data: binning,
// isotonic (non-increasing) smoothing, threshold boundary estimates, and
// the CFRB/PFRB/CIRB category rule.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "rbound/benchgen.hpp"
#include "rbound/comblaw.hpp"
#include "rbound/difficulty.hpp"

namespace rbound {

struct BoundaryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EvalRecord {
    std::string problem_id;
    std::string strategy;
    std::string model_name;
    DifficultyVector difficulty;
    std::vector<std::string> answers; // extracted answers per sample ("" if absent)
    bool correct = false;             // primary (first) sample
    std::optional<bool> sc_correct;
    int in_tokens = 0;
    int out_tokens = 0;
};

inline constexpr const char* kRecordSchema = "rbound-records/1";

inline Json record_to_json(const EvalRecord& r) {
    Json j;
    j["problem_id"] = r.problem_id;
    j["strategy"] = r.strategy;
    j["model"] = r.model_name;
    Json d = Json::object();
    for (const auto& [name, value] : r.difficulty.entries()) d[name] = value;
    j["difficulty"] = std::move(d);
    j["answers"] = r.answers;
    j["correct"] = r.correct;
    if (r.sc_correct) j["sc_correct"] = *r.sc_correct;
    j["in_tokens"] = r.in_tokens;
    j["out_tokens"] = r.out_tokens;
    return j;
}

inline EvalRecord record_from_json(const Json& j) {
    EvalRecord r;
    r.problem_id = j.at("problem_id").get<std::string>();
    r.strategy = j.at("strategy").get<std::string>();
    r.model_name = j.at("model").get<std::string>();
    for (const auto& [name, value] : j.at("difficulty").items())
        r.difficulty.set(name, value.get<double>());
    r.answers = j.at("answers").get<std::vector<std::string>>();
    r.correct = j.at("correct").get<bool>();
    if (j.contains("sc_correct")) r.sc_correct = j["sc_correct"].get<bool>();
    r.in_tokens = j.value("in_tokens", 0);
    r.out_tokens = j.value("out_tokens", 0);
    return r;
}

inline void write_records_header(std::ostream& out) {
    Json header;
    header["schema"] = kRecordSchema;
    out << header.dump() << "\n";
}

inline std::vector<EvalRecord> read_records(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw BoundaryError("record file is empty");
    Json header = Json::parse(line);
    if (header.value("schema", "") != kRecordSchema)
        throw BoundaryError("record file has unknown schema");
    std::vector<EvalRecord> out;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        out.push_back(record_from_json(Json::parse(line)));
    }
    return out;
}

// ---- binning ----

struct Bin {
    double lo = 0;
    double hi = 0;
    int n = 0;
    int k = 0;
    double acc = 0; // k/n, replaced by the pooled value after smoothing
};

// Axis along which records are binned: a raw difficulty dimension, or the
// fitted combination-law score.
struct BinAxis {
    std::string name;                    // dimension name or "combined-score"
    std::optional<CombLawParams> params; // required for combined-score

    static BinAxis dimension(std::string dim) { return {std::move(dim), std::nullopt}; }
    static BinAxis combined_score(CombLawParams p) { return {"combined-score", std::move(p)}; }

    double value_of(const EvalRecord& r) const {
        if (params) return score(*params, r.difficulty);
        if (!r.difficulty.has(name))
            throw BoundaryError("record '" + r.problem_id + "' lacks difficulty axis '" + name +
                                "'");
        return r.difficulty.get(name);
    }
};

struct BinScheme {
    enum class Kind { EqualWidth, EqualCount, Explicit } kind = Kind::EqualCount;
    std::size_t bin_count = 10;
    std::vector<double> edges; // for Explicit: ascending, size >= 2
};

inline std::vector<Bin> bin_records(const std::vector<EvalRecord>& records, const BinAxis& axis,
                                    const BinScheme& scheme) {
    if (records.empty()) throw BoundaryError("bin_records: no records");
    std::vector<std::pair<double, bool>> values;
    values.reserve(records.size());
    for (const auto& r : records) values.emplace_back(axis.value_of(r), r.correct);
    std::sort(values.begin(), values.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    std::vector<Bin> bins;
    auto push_range = [&](std::size_t begin, std::size_t end, double lo, double hi) {
        Bin b;
        b.lo = lo;
        b.hi = hi;
        for (std::size_t i = begin; i < end; ++i) {
            ++b.n;
            if (values[i].second) ++b.k;
        }
        if (b.n > 0) {
            b.acc = static_cast<double>(b.k) / b.n;
            bins.push_back(b);
        }
    };

    switch (scheme.kind) {
        case BinScheme::Kind::EqualCount: {
            if (scheme.bin_count < 1) throw BoundaryError("bin_records: bin_count must be >= 1");
            std::size_t total = values.size();
            std::size_t nbins = std::min(scheme.bin_count, total);
            std::size_t begin = 0;
            for (std::size_t b = 0; b < nbins; ++b) {
                std::size_t end = (total * (b + 1)) / nbins;
                if (end <= begin) continue;
                push_range(begin, end, values[begin].first, values[end - 1].first);
                begin = end;
            }
            break;
        }
        case BinScheme::Kind::EqualWidth: {
            if (scheme.bin_count < 1) throw BoundaryError("bin_records: bin_count must be >= 1");
            double lo = values.front().first;
            double hi = values.back().first;
            if (lo == hi) {
                push_range(0, values.size(), lo, hi);
                break;
            }
            double width = (hi - lo) / static_cast<double>(scheme.bin_count);
            std::size_t begin = 0;
            for (std::size_t b = 0; b < scheme.bin_count; ++b) {
                double edge_hi = (b + 1 == scheme.bin_count)
                                     ? hi
                                     : lo + width * static_cast<double>(b + 1);
                std::size_t end = begin;
                while (end < values.size() &&
                       (values[end].first < edge_hi ||
                        (b + 1 == scheme.bin_count && values[end].first <= edge_hi)))
                    ++end;
                push_range(begin, end, lo + width * static_cast<double>(b), edge_hi);
                begin = end;
            }
            break;
        }
        case BinScheme::Kind::Explicit: {
            if (scheme.edges.size() < 2)
                throw BoundaryError("bin_records: explicit scheme needs >= 2 edges");
            if (!std::is_sorted(scheme.edges.begin(), scheme.edges.end()))
                throw BoundaryError("bin_records: explicit edges must be ascending");
            if (values.front().first < scheme.edges.front() ||
                values.back().first > scheme.edges.back())
                throw BoundaryError("bin_records: record value outside explicit bin edges");
            std::size_t begin = 0;
            for (std::size_t b = 0; b + 1 < scheme.edges.size(); ++b) {
                double hi = scheme.edges[b + 1];
                bool last = b + 2 == scheme.edges.size();
                std::size_t end = begin;
                while (end < values.size() &&
                       (values[end].first < hi || (last && values[end].first <= hi)))
                    ++end;
                push_range(begin, end, scheme.edges[b], hi);
                begin = end;
            }
            break;
        }
    }
    return bins;
}

// ---- isotonic smoothing (pool adjacent violators, non-increasing) ----

inline std::vector<Bin> smooth_monotone(const std::vector<Bin>& bins) {
    struct Block {
        double weight;
        double sum; // weight * mean
        std::size_t count;
        double mean() const { return sum / weight; }
    };
    std::vector<Block> stack;
    for (const auto& b : bins) {
        Block blk{static_cast<double>(b.n), static_cast<double>(b.k), 1};
        stack.push_back(blk);
        while (stack.size() >= 2 &&
               stack[stack.size() - 2].mean() < stack.back().mean() - 1e-15) {
            Block top = stack.back();
            stack.pop_back();
            stack.back().weight += top.weight;
            stack.back().sum += top.sum;
            stack.back().count += top.count;
        }
    }
    std::vector<Bin> out = bins;
    std::size_t idx = 0;
    for (const auto& blk : stack) {
        double mean = blk.mean();
        for (std::size_t i = 0; i < blk.count; ++i) out[idx++].acc = mean;
    }
    return out;
}

// ---- boundary estimates ----

struct BoundaryEstimate {
    double threshold = 0.5;     // accuracy threshold K
    double value = 0.0;         // boundary in axis units; +inf when right-censored
    std::string axis;
    std::string method = "isotonic";
    bool right_censored = false;
};

inline BoundaryEstimate estimate_rb(const std::vector<Bin>& bins, double K,
                                    const std::string& axis_name = "") {
    if (!(K > 0.0 && K < 1.0))
        throw std::invalid_argument("estimate_rb: K must be in (0,1)");
    if (bins.empty()) throw BoundaryError("estimate_rb: no bins");
    BoundaryEstimate est;
    est.threshold = K;
    est.axis = axis_name;
    if (bins.front().acc < K) {
        est.value = 0.0; // boundary below the sampled range
        return est;
    }
    double value = bins.front().hi;
    bool all_pass = true;
    for (const auto& b : bins) {
        if (b.acc >= K) {
            value = b.hi;
        } else {
            all_pass = false;
            break;
        }
    }
    est.value = all_pass ? std::numeric_limits<double>::infinity() : value;
    est.right_censored = all_pass;
    return est;
}

// ---- categories ----

enum class RbCategory { CFRB, PFRB, CIRB };

inline std::string category_name(RbCategory c) {
    switch (c) {
        case RbCategory::CFRB: return "CFRB";
        case RbCategory::PFRB: return "PFRB";
        case RbCategory::CIRB: return "CIRB";
    }
    throw std::logic_error("bad RbCategory");
}

struct CategoryThresholds {
    double hi = 0.9;
    double lo = 0.1;
};

inline RbCategory categorize(double acc, const CategoryThresholds& t = {}) {
    if (!(t.hi > t.lo)) throw std::invalid_argument("categorize: requires hi > lo");
    if (!(acc >= 0.0 && acc <= 1.0)) throw std::invalid_argument("categorize: acc must be in [0,1]");
    if (acc >= t.hi) return RbCategory::CFRB;
    if (acc <= t.lo) return RbCategory::CIRB;
    return RbCategory::PFRB;
}

// ---- CSV export ----

inline void write_boundary_csv(std::ostream& out, const std::vector<BoundaryEstimate>& estimates) {
    out << "axis,K,B,method,censored\n";
    for (const auto& e : estimates) {
        out << e.axis << "," << e.threshold << ",";
        if (e.right_censored)
            out << "inf";
        else
            out << e.value;
        out << "," << e.method << "," << (e.right_censored ? 1 : 0) << "\n";
    }
}

} // namespace rbound
