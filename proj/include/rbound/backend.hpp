#pragma once

// Uniform completion interface: a live OpenAI-compatible chat endpoint with
// a persistent on-disk cache, and a parametric simulated reasoner used to
// validate the whole fitting pipeline end to end. Also answer extraction
// and exact-match grading.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "rbound/benchgen.hpp"
#include "rbound/comblaw.hpp"
#include "rbound/prompting.hpp"
#include "rbound/util.hpp"

namespace rbound {

struct BackendError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct AuthError : BackendError {
    using BackendError::BackendError;
};
struct RateLimitError : BackendError {
    using BackendError::BackendError;
};
struct MalformedResponseError : BackendError {
    using BackendError::BackendError;
};
struct CacheError : BackendError {
    using BackendError::BackendError;
};

enum class BackendKind { Http, Simulated };

struct ModelSpec {
    BackendKind kind = BackendKind::Simulated;
    std::string model_name = "simulated";
    double temperature = 0.0;
    double top_p = 1.0;
    int max_tokens = 512;
    int samples_per_call = 1;
};

inline void validate_model_spec(const ModelSpec& spec) {
    if (!(spec.temperature >= 0.0 && spec.temperature <= 1.0))
        throw std::invalid_argument("ModelSpec: temperature must be in [0,1]");
    if (spec.top_p != 0.95 && spec.top_p != 1.0)
        throw std::invalid_argument("ModelSpec: top_p must be 0.95 or 1.0");
    if (spec.max_tokens < 1) throw std::invalid_argument("ModelSpec: max_tokens must be positive");
    if (spec.samples_per_call < 1)
        throw std::invalid_argument("ModelSpec: samples_per_call must be positive");
}

struct CompletionResult {
    std::vector<std::string> raw_texts;
    std::vector<std::pair<int, int>> token_counts; // (input, output) per sample
    double latency_s = 0.0;
    bool cache_hit = false;
};

// ---- simulated reasoner ----

struct OracleParams {
    std::vector<DimParam> dims; // orientation defaults to capacity (1/(d-b))
    double z = 0.0;
    double sigma50 = 1.0; // score at which accuracy crosses 50%
    double kappa = 1.0;
};

inline double oracle_score(const OracleParams& oracle, const DifficultyVector& difficulty) {
    double total = oracle.z;
    for (const auto& p : oracle.dims) total += p.N * dim_transform(p, difficulty.get(p.name));
    return total;
}

inline double oracle_accuracy(const OracleParams& oracle, const DifficultyVector& difficulty) {
    return logistic(oracle.kappa * (oracle.sigma50 - oracle_score(oracle, difficulty)));
}

inline CombLawParams oracle_to_comblaw(const OracleParams& oracle) {
    CombLawParams params;
    params.dims = oracle.dims;
    params.z = oracle.z;
    params.kappa = oracle.kappa;
    params.sigma_levels[0.5] = oracle.sigma50;
    return params;
}

// The deterministic wrong alternative: simulated incorrect paths all agree
// on it, giving two-alternative answer distributions.
inline BigInt perturb_truth(const BigInt& truth) { return truth + 1; }

inline std::string simulate(const OracleParams& oracle, const DifficultyVector& difficulty,
                            const BigInt& truth, std::uint64_t rng_seed) {
    double p = oracle_accuracy(oracle, difficulty);
    std::mt19937_64 rng(rng_seed);
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    const BigInt& answer = u < p ? truth : perturb_truth(truth);
    std::ostringstream out;
    out << "The answer is " << answer << ".";
    return out.str();
}

// ---- answer extraction and grading ----

namespace extractdetail {

inline bool parse_number_at(const std::string& text, std::size_t pos, BigInt& out,
                            std::size_t& end) {
    std::size_t i = pos;
    bool negative = false;
    if (i < text.size() && (text[i] == '-' || text[i] == '+')) {
        negative = text[i] == '-';
        ++i;
    }
    if (i >= text.size() || !std::isdigit(static_cast<unsigned char>(text[i]))) return false;
    std::string digits;
    while (i < text.size()) {
        if (std::isdigit(static_cast<unsigned char>(text[i]))) {
            digits += text[i];
            ++i;
        } else if (text[i] == ',' && i + 3 < text.size() + 1 &&
                   i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
            // thousands separator: consume and continue
            ++i;
        } else {
            break;
        }
    }
    // reject values with a nonzero fractional part
    if (i < text.size() && text[i] == '.' && i + 1 < text.size() &&
        std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
        std::size_t f = i + 1;
        bool nonzero = false;
        while (f < text.size() && std::isdigit(static_cast<unsigned char>(text[f]))) {
            if (text[f] != '0') nonzero = true;
            ++f;
        }
        if (nonzero) return false;
        i = f;
    }
    out = BigInt(digits);
    if (negative) out = -out;
    end = i;
    return true;
}

inline std::string lowercase(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

} // namespace extractdetail

// Number following the last "answer is" / "answer:" marker; otherwise the
// last integer literal in the text; absent if neither exists.
inline std::optional<BigInt> extract_answer(const std::string& text) {
    std::string lower = extractdetail::lowercase(text);
    std::size_t marker_end = std::string::npos;
    for (const char* marker : {"answer is", "answer:"}) {
        std::size_t pos = lower.rfind(marker);
        if (pos != std::string::npos) {
            std::size_t end = pos + std::string(marker).size();
            if (marker_end == std::string::npos || end > marker_end) marker_end = end;
        }
    }
    if (marker_end != std::string::npos) {
        std::size_t i = marker_end;
        while (i < text.size() &&
               (text[i] == ' ' || text[i] == '*' || text[i] == '$' || text[i] == '\t' ||
                text[i] == '\n'))
            ++i;
        BigInt value;
        std::size_t end = 0;
        if (extractdetail::parse_number_at(text, i, value, end)) return value;
    }
    // fallback: last integer literal anywhere
    std::optional<BigInt> last;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) continue;
        std::size_t start = i;
        if (start > 0 && text[start - 1] == '-' &&
            (start == 1 || !std::isdigit(static_cast<unsigned char>(text[start - 2]))))
            --start;
        BigInt value;
        std::size_t end = 0;
        if (extractdetail::parse_number_at(text, start, value, end)) {
            last = value;
            i = end;
        }
    }
    return last;
}

inline bool grade(const std::optional<BigInt>& extracted, const BigInt& truth) {
    return extracted.has_value() && *extracted == truth;
}

// ---- persistent completion cache ----

// Append-only JSON Lines file; one entry per cached sample. Corrupt lines
// are a loud error, never silently regenerated.
class CompletionCache {
public:
    struct Sample {
        std::string text;
        int in_tokens = 0;
        int out_tokens = 0;
    };

    CompletionCache() = default;

    explicit CompletionCache(std::string path) : path_(std::move(path)) {
        std::ifstream in(path_);
        if (!in) return; // fresh cache
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            Json j;
            try {
                j = Json::parse(line);
            } catch (const std::exception& e) {
                throw CacheError("completion cache " + path_ + " corrupt at line " +
                                 std::to_string(lineno) + ": " + e.what());
            }
            Sample s;
            s.text = j.at("text").get<std::string>();
            s.in_tokens = j.value("in_tokens", 0);
            s.out_tokens = j.value("out_tokens", 0);
            entries_[j.at("key").get<std::string>()] = std::move(s);
        }
    }

    std::optional<Sample> lookup(const std::string& key) const {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void store(const std::string& key, const Sample& sample) {
        std::lock_guard<std::mutex> lock(mutex_);
        entries_[key] = sample;
        if (path_.empty()) return;
        std::ofstream out(path_, std::ios::app);
        if (!out) throw CacheError("cannot append to completion cache: " + path_);
        Json j;
        j["key"] = key;
        j["text"] = sample.text;
        j["in_tokens"] = sample.in_tokens;
        j["out_tokens"] = sample.out_tokens;
        out << j.dump() << "\n";
    }

private:
    std::string path_;
    std::unordered_map<std::string, Sample> entries_;
    mutable std::mutex mutex_;
};

inline Json messages_to_json(const MessageSeq& messages) {
    Json arr = Json::array();
    for (const auto& m : messages) {
        Json msg;
        msg["role"] = role_name(m.role);
        msg["content"] = m.content;
        arr.push_back(std::move(msg));
    }
    return arr;
}

inline std::string completion_cache_key(const ModelSpec& spec, const MessageSeq& messages,
                                        int sample_index) {
    std::ostringstream canon;
    canon << spec.model_name << "|" << spec.temperature << "|" << spec.top_p << "|"
          << spec.max_tokens << "|" << messages_to_json(messages).dump() << "#" << sample_index;
    return hex64(fnv1a64(canon.str()));
}

struct HttpConfig {
    std::string base_url;                       // e.g. "http://localhost:8089"
    std::string path = "/v1/chat/completions";
    std::string api_key_env = "RBOUND_API_KEY"; // credential via environment only
    int max_retries = 5;
    double backoff_base_s = 0.25;
    double timeout_s = 120.0;
};

} // namespace rbound

#ifndef RBOUND_NO_HTTP
#include <httplib.h>

namespace rbound {

class HttpBackend {
public:
    HttpBackend(ModelSpec spec, HttpConfig config, CompletionCache* cache)
        : spec_(std::move(spec)), config_(std::move(config)), cache_(cache) {
        validate_model_spec(spec_);
    }

    CompletionResult complete(const MessageSeq& messages) {
        if (spec_.kind == BackendKind::Simulated)
            throw std::invalid_argument(
                "complete: spec is a simulated backend; use simulate() instead");
        auto t0 = std::chrono::steady_clock::now();
        CompletionResult result;
        result.cache_hit = true;

        std::vector<int> missing;
        result.raw_texts.resize(static_cast<std::size_t>(spec_.samples_per_call));
        result.token_counts.resize(static_cast<std::size_t>(spec_.samples_per_call));
        for (int i = 0; i < spec_.samples_per_call; ++i) {
            auto cached = cache_ ? cache_->lookup(completion_cache_key(spec_, messages, i))
                                 : std::nullopt;
            if (cached) {
                result.raw_texts[static_cast<std::size_t>(i)] = cached->text;
                result.token_counts[static_cast<std::size_t>(i)] = {cached->in_tokens,
                                                                    cached->out_tokens};
            } else {
                missing.push_back(i);
            }
        }
        if (!missing.empty()) {
            result.cache_hit = false;
            fetch(messages, missing, result);
        }
        result.latency_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return result;
    }

private:
    void fetch(const MessageSeq& messages, const std::vector<int>& indices,
               CompletionResult& result) {
        Json body;
        body["model"] = spec_.model_name;
        body["messages"] = messages_to_json(messages);
        body["temperature"] = spec_.temperature;
        body["top_p"] = spec_.top_p;
        body["max_tokens"] = spec_.max_tokens;
        body["n"] = indices.size();

        httplib::Client client(config_.base_url);
        client.set_read_timeout(std::chrono::milliseconds(
            static_cast<int>(config_.timeout_s * 1000)));
        httplib::Headers headers;
        if (const char* key = std::getenv(config_.api_key_env.c_str()))
            headers.emplace("Authorization", std::string("Bearer ") + key);

        std::string payload = body.dump();
        for (int attempt = 0;; ++attempt) {
            auto res = client.Post(config_.path, headers, payload, "application/json");
            if (res) {
                if (res->status == 401 || res->status == 403)
                    throw AuthError("completion endpoint rejected credentials (status " +
                                    std::to_string(res->status) + ")");
                if (res->status == 200) {
                    parse_response(res->body, indices, messages, result);
                    return;
                }
                if (res->status != 429 && res->status < 500)
                    throw BackendError("completion endpoint returned status " +
                                       std::to_string(res->status) + ": " + res->body);
            }
            if (attempt >= config_.max_retries) {
                if (res && res->status == 429)
                    throw RateLimitError("rate limit persisted after " +
                                         std::to_string(attempt) + " retries");
                throw BackendError("completion request failed after " + std::to_string(attempt) +
                                   " retries");
            }
            double sleep_s = config_.backoff_base_s * static_cast<double>(1 << attempt);
            std::this_thread::sleep_for(std::chrono::duration<double>(sleep_s));
        }
    }

    void parse_response(const std::string& body, const std::vector<int>& indices,
                        const MessageSeq& messages, CompletionResult& result) {
        Json j;
        try {
            j = Json::parse(body);
        } catch (const std::exception& e) {
            throw MalformedResponseError(std::string("response is not valid JSON: ") + e.what());
        }
        if (!j.contains("choices") || !j["choices"].is_array() ||
            j["choices"].size() < indices.size())
            throw MalformedResponseError("response is missing choices");
        int in_tokens = 0, out_tokens = 0;
        if (j.contains("usage")) {
            in_tokens = j["usage"].value("prompt_tokens", 0);
            out_tokens = j["usage"].value("completion_tokens", 0);
        }
        int per_sample_out =
            out_tokens / std::max<int>(1, static_cast<int>(indices.size()));
        for (std::size_t s = 0; s < indices.size(); ++s) {
            const Json& choice = j["choices"][s];
            if (!choice.contains("message") || !choice["message"].contains("content"))
                throw MalformedResponseError("choice is missing message content");
            std::string text = choice["message"]["content"].get<std::string>();
            int idx = indices[s];
            result.raw_texts[static_cast<std::size_t>(idx)] = text;
            result.token_counts[static_cast<std::size_t>(idx)] = {in_tokens, per_sample_out};
            if (cache_)
                cache_->store(completion_cache_key(spec_, messages, idx),
                              {text, in_tokens, per_sample_out});
        }
    }

    ModelSpec spec_;
    HttpConfig config_;
    CompletionCache* cache_;
};

} // namespace rbound
#endif // RBOUND_NO_HTTP
