#pragma once

// Harmonic combination-law algebra and maximum-likelihood fitting of its
// parameters from per-sample correctness data.
//
// The score of a difficulty point is
//     sigma(d) = sum_i N_i * g_i(d_i) + z
// with g_i(d) = 1/(d - b_i) on capacity-style axes (larger d = easier) and
// g_i(d) = (d - b_i) on load-style axes (larger d = harder). Predicted
// accuracy is logistic(kappa * (sigma_0.5 - score)), so accuracy is always
// monotone non-increasing in the score.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rbound/difficulty.hpp"
#include "rbound/textconfig.hpp"
#include "rbound/util.hpp"

namespace rbound {

struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class AxisOrientation { Capacity, Load };

inline std::string orientation_name(AxisOrientation o) {
    return o == AxisOrientation::Capacity ? "capacity" : "load";
}

inline AxisOrientation orientation_from_name(const std::string& s) {
    if (s == "capacity") return AxisOrientation::Capacity;
    if (s == "load") return AxisOrientation::Load;
    throw std::invalid_argument("unknown axis orientation '" + s + "'");
}

struct DimParam {
    std::string name;
    AxisOrientation orientation = AxisOrientation::Capacity;
    double N = 1.0;
    double b = 0.0;
};

struct CombLawParams {
    std::vector<DimParam> dims;
    double z = 0.0;
    double kappa = 1.0;
    std::map<double, double> sigma_levels; // accuracy threshold K -> score level

    const DimParam& dim(const std::string& name) const {
        for (const auto& d : dims)
            if (d.name == name) return d;
        throw std::invalid_argument("comblaw: unknown dimension '" + name + "'");
    }
    bool has_dim(const std::string& name) const {
        for (const auto& d : dims)
            if (d.name == name) return true;
        return false;
    }
    double sigma_at(double K) const {
        auto it = sigma_levels.find(K);
        if (it != sigma_levels.end()) return it->second;
        auto mid = sigma_levels.find(0.5);
        if (mid == sigma_levels.end())
            throw std::invalid_argument("comblaw: sigma level for K=0.5 not available");
        return mid->second - logit(K) / kappa;
    }
};

inline double dim_transform(const DimParam& p, double d) {
    if (p.orientation == AxisOrientation::Capacity) {
        if (d <= p.b)
            throw std::domain_error("comblaw: capacity axis '" + p.name + "' requires d > b (d=" +
                                    std::to_string(d) + ", b=" + std::to_string(p.b) + ")");
        return 1.0 / (d - p.b);
    }
    return d - p.b;
}

inline double score(const CombLawParams& params, const DifficultyVector& d) {
    double total = params.z;
    for (const auto& p : params.dims) total += p.N * dim_transform(p, d.get(p.name));
    return total;
}

inline double predict_accuracy(const CombLawParams& params, const DifficultyVector& d) {
    auto mid = params.sigma_levels.find(0.5);
    if (mid == params.sigma_levels.end())
        throw std::invalid_argument("predict_accuracy: sigma level for K=0.5 is absent");
    return logistic(params.kappa * (mid->second - score(params, d)));
}

// ---- harmonic algebra ----

inline double combine(const std::vector<double>& boundaries) {
    if (boundaries.empty()) throw std::invalid_argument("combine: empty boundary list");
    double denom = 0.0;
    for (double b : boundaries) {
        if (std::isinf(b) && b > 0) continue; // infinite capability contributes nothing
        if (!(b > 0)) throw std::domain_error("combine: boundaries must be positive");
        denom += 1.0 / b;
    }
    if (denom == 0.0) return std::numeric_limits<double>::infinity();
    return 1.0 / denom;
}

struct WeightedBoundary {
    double B;
    double N;
    double b;
};

inline double combine_weighted(const std::vector<WeightedBoundary>& entries, double z) {
    if (entries.empty()) throw std::invalid_argument("combine_weighted: empty entry list");
    if (z < 0) throw std::domain_error("combine_weighted: z must be >= 0");
    double denom = z;
    for (const auto& e : entries) {
        if (std::isinf(e.B) && e.B > 0) continue;
        if (!(e.N > 0)) throw std::domain_error("combine_weighted: N must be positive");
        if (!(e.B > e.b)) throw std::domain_error("combine_weighted: requires B > b");
        denom += e.N / (e.B - e.b);
    }
    if (denom == 0.0) return std::numeric_limits<double>::infinity();
    return 1.0 / denom;
}

inline std::pair<double, double> divide(double B, double ratio) {
    if (!(B > 0)) throw std::domain_error("divide: B must be positive");
    if (!(ratio > 0.0 && ratio < 1.0))
        throw std::invalid_argument("divide: ratio must be in (0,1)");
    return {B / ratio, B / (1.0 - ratio)};
}

inline CombLawParams tool_limit(const CombLawParams& params, const std::string& dim) {
    CombLawParams out = params;
    auto it = std::find_if(out.dims.begin(), out.dims.end(),
                           [&](const DimParam& p) { return p.name == dim; });
    if (it == out.dims.end())
        throw std::invalid_argument("tool_limit: dimension '" + dim + "' not in params");
    out.dims.erase(it);
    if (out.dims.empty() && out.z == 0.0)
        throw std::invalid_argument("tool_limit: removing the last dimension leaves no model");
    return out;
}

// ---- level curves ----

struct LevelCurvePoint {
    DifficultyVector point; // all dims, including the solved free dim
    double free_value;
};

inline std::vector<LevelCurvePoint> level_curve(const CombLawParams& params, double K,
                                                const std::string& free_dim,
                                                const std::vector<DifficultyVector>& grid) {
    const DimParam& fp = params.dim(free_dim);
    double sigma = params.sigma_at(K);
    std::vector<LevelCurvePoint> out;
    for (const auto& g : grid) {
        double rest = params.z;
        bool ok = true;
        for (const auto& p : params.dims) {
            if (p.name == free_dim) continue;
            try {
                rest += p.N * dim_transform(p, g.get(p.name));
            } catch (const std::domain_error&) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        double r = sigma - rest; // N_f * g_f(d_f) must equal r
        double d_free;
        if (fp.orientation == AxisOrientation::Capacity) {
            if (!(r > 0)) continue;
            d_free = fp.b + fp.N / r;
        } else {
            d_free = fp.b + r / fp.N;
        }
        if (!(d_free > 0) || !std::isfinite(d_free)) continue;
        LevelCurvePoint pt;
        pt.point = g;
        pt.point.set(free_dim, d_free);
        pt.free_value = d_free;
        out.push_back(std::move(pt));
    }
    return out;
}

// ---- fitting ----

struct FitObservation {
    DifficultyVector difficulty;
    bool correct;
};

struct FitDimSpec {
    std::string name;
    AxisOrientation orientation = AxisOrientation::Capacity;
};

struct FitOptions {
    std::vector<FitDimSpec> dims;
    double z = 0.0; // held fixed: z is a pure level shift of sigma, not identifiable alone
    std::vector<double> sigma_ks = {0.1, 0.5, 0.9};
    int max_newton_iters = 60;
    double grad_tol = 1e-6; // infinity norm of the mean gradient, scaled units
};

struct FitReport {
    CombLawParams params;
    double log_likelihood = 0.0;
    std::size_t n_records = 0;
    bool converged = false;
    std::vector<double> curvature; // per-dim profile curvature (mean-Hessian diagonal)
};

namespace fitdetail {

struct Cell {
    std::vector<double> d; // raw difficulty per dim
    double k = 0;          // successes
    double n = 0;          // trials
};

// Solve A x = rhs by Gaussian elimination with partial pivoting. A is tiny
// (dims + 1 square), so no library dependency is warranted.
inline std::vector<double> solve_dense(std::vector<std::vector<double>> A,
                                       std::vector<double> rhs) {
    const std::size_t n = rhs.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::fabs(A[r][col]) > std::fabs(A[pivot][col])) pivot = r;
        std::swap(A[col], A[pivot]);
        std::swap(rhs[col], rhs[pivot]);
        double diag = A[col][col];
        if (std::fabs(diag) < 1e-300) throw FitError("fit: singular normal equations");
        for (std::size_t r = col + 1; r < n; ++r) {
            double f = A[r][col] / diag;
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) A[r][c] -= f * A[col][c];
            rhs[r] -= f * rhs[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double acc = rhs[i];
        for (std::size_t c = i + 1; c < n; ++c) acc -= A[i][c] * x[c];
        x[i] = acc / A[i][i];
    }
    return x;
}

inline double transform_raw(AxisOrientation orient, double d, double b) {
    if (orient == AxisOrientation::Capacity) {
        if (d <= b) throw std::domain_error("capacity axis requires d > b");
        return 1.0 / (d - b);
    }
    return d - b;
}

struct IrlsResult {
    std::vector<double> w; // [intercept, per-dim coefficients]
    double log_likelihood = -std::numeric_limits<double>::infinity();
    double grad_inf = std::numeric_limits<double>::infinity();
    std::vector<double> hess_diag;
    bool ok = false;
};

// Convex logistic regression on the transformed features for a fixed b
// vector; Newton iterations with step halving.
inline IrlsResult irls(const std::vector<Cell>& cells, const std::vector<FitDimSpec>& dims,
                       const std::vector<double>& b, int max_iters) {
    const std::size_t m = dims.size();
    const std::size_t p = m + 1;
    std::vector<std::vector<double>> phi(cells.size(), std::vector<double>(p, 1.0));
    for (std::size_t j = 0; j < cells.size(); ++j)
        for (std::size_t i = 0; i < m; ++i)
            phi[j][i + 1] = transform_raw(dims[i].orientation, cells[j].d[i], b[i]);

    double total_n = 0;
    for (const auto& c : cells) total_n += c.n;

    auto loglik = [&](const std::vector<double>& w) {
        double ll = 0;
        for (std::size_t j = 0; j < cells.size(); ++j) {
            double eta = 0;
            for (std::size_t c = 0; c < p; ++c) eta += w[c] * phi[j][c];
            // k*log(p) + (n-k)*log(1-p) in a numerically stable form
            double lse = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
            ll += cells[j].k * eta - cells[j].n * lse;
        }
        return ll;
    };

    IrlsResult res;
    std::vector<double> w(p, 0.0);
    double ll = loglik(w);
    for (int iter = 0; iter < max_iters; ++iter) {
        std::vector<double> grad(p, 0.0);
        std::vector<std::vector<double>> hess(p, std::vector<double>(p, 0.0));
        for (std::size_t j = 0; j < cells.size(); ++j) {
            double eta = 0;
            for (std::size_t c = 0; c < p; ++c) eta += w[c] * phi[j][c];
            double pj = logistic(eta);
            double g = cells[j].k - cells[j].n * pj;
            double h = cells[j].n * pj * (1.0 - pj);
            for (std::size_t a = 0; a < p; ++a) {
                grad[a] += g * phi[j][a];
                for (std::size_t c2 = 0; c2 < p; ++c2) hess[a][c2] += h * phi[j][a] * phi[j][c2];
            }
        }
        for (std::size_t a = 0; a < p; ++a) hess[a][a] += 1e-9 * (1.0 + hess[a][a]);
        double ginf = 0;
        for (double g : grad) ginf = std::max(ginf, std::fabs(g) / total_n);
        res.grad_inf = ginf;
        res.hess_diag.assign(p, 0.0);
        for (std::size_t a = 0; a < p; ++a) res.hess_diag[a] = hess[a][a] / total_n;
        if (ginf < 1e-12) break;

        std::vector<double> step;
        try {
            step = solve_dense(hess, grad);
        } catch (const FitError&) {
            break;
        }
        double scale = 1.0;
        bool improved = false;
        for (int half = 0; half < 30; ++half) {
            std::vector<double> w2 = w;
            for (std::size_t c = 0; c < p; ++c) w2[c] += scale * step[c];
            double ll2 = loglik(w2);
            if (ll2 >= ll - 1e-12) {
                w = std::move(w2);
                ll = ll2;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if (!improved) break;
    }
    res.w = std::move(w);
    res.log_likelihood = ll;
    res.ok = true;
    return res;
}

} // namespace fitdetail

inline FitReport fit(const std::vector<FitObservation>& records, const FitOptions& options,
                     const std::optional<CombLawParams>& init = std::nullopt) {
    if (options.dims.empty()) throw FitError("fit: no dimensions specified");
    const std::size_t m = options.dims.size();

    // aggregate records into unique difficulty cells
    std::map<std::vector<double>, std::pair<double, double>> agg; // d -> (k, n)
    for (const auto& r : records) {
        std::vector<double> key(m);
        for (std::size_t i = 0; i < m; ++i) key[i] = r.difficulty.get(options.dims[i].name);
        auto& kn = agg[key];
        kn.first += r.correct ? 1.0 : 0.0;
        kn.second += 1.0;
    }
    std::vector<fitdetail::Cell> cells;
    cells.reserve(agg.size());
    double total_k = 0, total_n = 0;
    for (const auto& [key, kn] : agg) {
        fitdetail::Cell c;
        c.d = key;
        c.k = kn.first;
        c.n = kn.second;
        total_k += c.k;
        total_n += c.n;
        cells.push_back(std::move(c));
    }
    if (total_n == 0) throw FitError("fit: no records");
    if (total_k == 0 || total_k == total_n)
        throw FitError("fit: no boundary in sampled range (all records " +
                       std::string(total_k == 0 ? "incorrect" : "correct") + ")");
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<double> vals;
        for (const auto& c : cells) vals.push_back(c.d[i]);
        std::sort(vals.begin(), vals.end());
        if (std::unique(vals.begin(), vals.end()) - vals.begin() < 2)
            throw FitError("fit: dimension '" + options.dims[i].name +
                           "' has fewer than 2 distinct difficulty values");
    }

    std::vector<double> min_d(m, std::numeric_limits<double>::infinity());
    for (const auto& c : cells)
        for (std::size_t i = 0; i < m; ++i) min_d[i] = std::min(min_d[i], c.d[i]);

    // candidate offsets per dimension; init params seed an extra candidate
    std::vector<std::vector<double>> b_candidates(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<double>& cand = b_candidates[i];
        cand = {0.0};
        for (double f : {-1.0, -0.5, 0.25, 0.5, 0.75, 0.9}) {
            double b = min_d[i] * f;
            if (b < min_d[i]) cand.push_back(b);
        }
        if (init && init->has_dim(options.dims[i].name)) {
            double b0 = init->dim(options.dims[i].name).b;
            if (options.dims[i].orientation != AxisOrientation::Capacity || b0 < min_d[i])
                cand.push_back(b0);
        }
    }

    // score of a b vector = profile log-likelihood (convex inner problem);
    // reject combinations whose fitted direction violates N > 0 or kappa > 0.
    auto evaluate = [&](const std::vector<double>& b) -> std::pair<double, fitdetail::IrlsResult> {
        for (std::size_t i = 0; i < m; ++i)
            if (options.dims[i].orientation == AxisOrientation::Capacity && b[i] >= min_d[i])
                return {-std::numeric_limits<double>::infinity(), {}};
        fitdetail::IrlsResult r =
            fitdetail::irls(cells, options.dims, b, options.max_newton_iters);
        if (!r.ok) return {-std::numeric_limits<double>::infinity(), {}};
        double w1 = r.w[1];
        if (!(w1 < 0)) return {-std::numeric_limits<double>::infinity(), {}};
        for (std::size_t i = 1; i < m; ++i)
            if (!(r.w[i + 1] < 0)) return {-std::numeric_limits<double>::infinity(), {}};
        return {r.log_likelihood, std::move(r)};
    };

    // coarse grid over b
    std::vector<double> best_b(m, 0.0);
    double best_ll = -std::numeric_limits<double>::infinity();
    fitdetail::IrlsResult best_irls;
    std::vector<std::size_t> idx(m, 0);
    while (true) {
        std::vector<double> b(m);
        for (std::size_t i = 0; i < m; ++i) b[i] = b_candidates[i][idx[i]];
        auto [ll, r] = evaluate(b);
        if (ll > best_ll) {
            best_ll = ll;
            best_b = b;
            best_irls = std::move(r);
        }
        std::size_t pos = 0;
        while (pos < m && ++idx[pos] == b_candidates[pos].size()) idx[pos++] = 0;
        if (pos == m) break;
    }
    if (!std::isfinite(best_ll)) throw FitError("fit: likelihood undefined over the search grid");

    // local refinement: per-dimension golden-section search on the profile
    // likelihood, two sweeps
    const double gr = 0.61803398874989484;
    for (int sweep = 0; sweep < 2; ++sweep) {
        for (std::size_t i = 0; i < m; ++i) {
            double span = std::max(std::fabs(min_d[i]), 1.0);
            double lo = best_b[i] - 0.5 * span;
            double hi = best_b[i] + 0.5 * span;
            if (options.dims[i].orientation == AxisOrientation::Capacity)
                hi = std::min(hi, min_d[i] - 1e-9 * span - 1e-12);
            if (!(lo < hi)) continue;
            auto profile = [&](double bi) {
                std::vector<double> b = best_b;
                b[i] = bi;
                return evaluate(b).first;
            };
            double x1 = hi - gr * (hi - lo);
            double x2 = lo + gr * (hi - lo);
            double f1 = profile(x1), f2 = profile(x2);
            for (int it = 0; it < 40; ++it) {
                if (f1 < f2) {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + gr * (hi - lo);
                    f2 = profile(x2);
                } else {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - gr * (hi - lo);
                    f1 = profile(x1);
                }
            }
            double bi = 0.5 * (lo + hi);
            std::vector<double> b = best_b;
            b[i] = bi;
            auto [ll, r] = evaluate(b);
            if (ll > best_ll) {
                best_ll = ll;
                best_b = b;
                best_irls = std::move(r);
            }
        }
    }

    // unpack: w0 = kappa*(sigma05 - z), w_i = -kappa*N_i, gauge fixed by N_1 = 1
    double kappa = -best_irls.w[1];
    FitReport report;
    report.n_records = records.size();
    report.log_likelihood = best_ll;
    report.converged = best_irls.grad_inf < options.grad_tol;
    CombLawParams params;
    params.z = options.z;
    params.kappa = kappa;
    for (std::size_t i = 0; i < m; ++i) {
        DimParam p;
        p.name = options.dims[i].name;
        p.orientation = options.dims[i].orientation;
        p.N = -best_irls.w[i + 1] / kappa;
        p.b = best_b[i];
        params.dims.push_back(p);
    }
    double sigma05 = options.z + best_irls.w[0] / kappa;
    for (double K : options.sigma_ks) params.sigma_levels[K] = sigma05 - logit(K) / kappa;
    params.sigma_levels[0.5] = sigma05;
    report.params = std::move(params);
    report.curvature.assign(best_irls.hess_diag.begin() + 1, best_irls.hess_diag.end());
    return report;
}

// ---- fitted-model serialization (structured text) ----

inline constexpr const char* kModelSchema = "rbound-comblaw/1";

inline std::string serialize_comblaw(const CombLawParams& params) {
    ConfigSection sec;
    sec.kind = "comblaw";
    sec.entries.emplace_back("schema", kModelSchema);
    for (const auto& d : params.dims) {
        std::ostringstream v;
        v << d.name << " " << orientation_name(d.orientation) << " " << d.N << " " << d.b;
        sec.entries.emplace_back("dim", v.str());
    }
    {
        std::ostringstream v;
        v << params.z;
        sec.entries.emplace_back("z", v.str());
    }
    {
        std::ostringstream v;
        v << params.kappa;
        sec.entries.emplace_back("kappa", v.str());
    }
    for (const auto& [K, sigma] : params.sigma_levels) {
        std::ostringstream v;
        v << K << " " << sigma;
        sec.entries.emplace_back("sigma", v.str());
    }
    return serialize_config({sec});
}

inline CombLawParams parse_comblaw(const std::string& text) {
    auto sections = parse_config_string(text);
    if (sections.size() != 1 || sections[0].kind != "comblaw")
        throw ConfigError("expected a single [comblaw] section");
    const ConfigSection& sec = sections[0];
    if (sec.get_or("schema", "") != kModelSchema)
        throw ConfigError("comblaw file has unknown schema");
    CombLawParams params;
    for (const auto& dimline : sec.get_all("dim")) {
        std::istringstream v(dimline);
        DimParam p;
        std::string orient;
        if (!(v >> p.name >> orient >> p.N >> p.b))
            throw ConfigError("malformed dim entry: " + dimline);
        p.orientation = orientation_from_name(orient);
        params.dims.push_back(p);
    }
    params.z = std::stod(sec.get("z"));
    params.kappa = std::stod(sec.get("kappa"));
    for (const auto& sline : sec.get_all("sigma")) {
        std::istringstream v(sline);
        double K = 0, sigma = 0;
        if (!(v >> K >> sigma)) throw ConfigError("malformed sigma entry: " + sline);
        params.sigma_levels[K] = sigma;
    }
    return params;
}

} // namespace rbound
