#pragma once

// Fitting the embedded-liability models to option chains by minimising
//   E = sqrt( (1/n) sum_j ((P*_j - P_j) / P*_j)^2 + w^2 sum_i ln(F*_{i+1} / F*_i)^2 )
// where P* are market mids and P model prices.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_vector.h>

#include "commodopt/black.hpp"
#include "commodopt/errors.hpp"
#include "commodopt/mjd.hpp"
#include "commodopt/payoff.hpp"

namespace commodopt {

enum class ModelKind { diffusion, mjd };

inline const char* to_string(ModelKind m) { return m == ModelKind::diffusion ? "diffusion" : "mjd"; }

struct Quote {
    double strike;
    OptionType type;
    double mid;
    std::optional<double> bid;
    std::optional<double> ask;
};

struct OptionChain {
    std::string contract;
    std::chrono::year_month_day quote_date{};
    std::chrono::year_month_day expiry_date{};
    double futures = 0.0;
    std::vector<Quote> quotes;
    std::optional<double> tau_override;

    // ACT/365 unless overridden.
    double tau() const {
        if (tau_override) return *tau_override;
        auto days = (std::chrono::sys_days(expiry_date) - std::chrono::sys_days(quote_date)).count();
        return static_cast<double>(days) / 365.0;
    }
};

inline constexpr std::size_t min_quotes_per_chain = 4;

// RMS difference below which the liability-free fit is preferred.
inline constexpr double face_tolerance = 1e-8;

// Throws InputError for hard violations; returns warnings for excluded quotes
// and static-arbitrage breaches.
inline std::vector<std::string> validate_chain(const OptionChain& c) {
    std::vector<std::string> warnings;
    const std::string id = "chain " + c.contract + ": ";
    if (!std::isfinite(c.futures)) throw InputError(id + "futures settle must be finite");
    if (!(c.tau() > 0.0)) throw InputError(id + "expiry must be after the quote date");
    std::size_t usable = 0;
    for (OptionType type : {OptionType::put, OptionType::call}) {
        std::vector<const Quote*> side;
        for (const auto& q : c.quotes) {
            if (q.type != type) continue;
            if (!std::isfinite(q.strike) || !std::isfinite(q.mid)) throw InputError(id + "non-finite quote");
            if (!side.empty() && !(q.strike > side.back()->strike))
                throw InputError(id + to_string(type) + " strikes must be strictly increasing (at " +
                                 std::to_string(q.strike) + ")");
            side.push_back(&q);
            if (q.mid > 0.0) ++usable;
            else warnings.push_back(id + "non-positive mid at strike " + std::to_string(q.strike) + " excluded");
        }
        // Static arbitrage: monotone, slope bounded by one, convex.
        const double sgn = type == OptionType::put ? 1.0 : -1.0;
        for (std::size_t i = 1; i < side.size(); ++i) {
            double slope = (side[i]->mid - side[i - 1]->mid) / (side[i]->strike - side[i - 1]->strike);
            if (sgn * slope < -1e-12 || sgn * slope > 1.0 + 1e-12)
                warnings.push_back(id + to_string(type) + " slope " + std::to_string(slope) + " out of [0, 1] near strike " +
                                   std::to_string(side[i]->strike));
            if (i + 1 < side.size()) {
                double next = (side[i + 1]->mid - side[i]->mid) / (side[i + 1]->strike - side[i]->strike);
                if (next < slope - 1e-12)
                    warnings.push_back(id + to_string(type) + " convexity violated at strike " +
                                       std::to_string(side[i]->strike));
            }
        }
    }
    if (usable < min_quotes_per_chain)
        throw InputError(id + "needs at least " + std::to_string(min_quotes_per_chain) + " positive quotes, has " +
                         std::to_string(usable));
    return warnings;
}

struct ModelParams {
    ModelKind model = ModelKind::diffusion;
    double sigma = 0.0;
    double k_i = 1.0;
    double lambda = 0.0;
    double ell = 0.0;
    double kappa = 0.0;
    double c = 0.0;
    double delta = 0.5;
    double f_star = 0.0;
    double tau = 0.0;
    double r = 0.0;

    EmbeddedLiability liability() const { return EmbeddedLiability(k_i, ell, lambda); }
    double discount_factor() const { return std::exp(-r * tau); }

    MjdSpec mjd_spec() const { return {f_star, sigma, kappa, c, delta, tau}; }

    double futures() const {
        if (model == ModelKind::mjd) return mjd_futures(mjd_spec(), liability());
        return futures_price({f_star, sigma, tau, r}, liability()).futures;
    }

    // Undiscounted.
    double price(double k, OptionType type) const {
        if (model == ModelKind::mjd) return mjd_option(mjd_spec(), liability(), k, type);
        return option_price({f_star, sigma, tau, r}, liability(), k, type);
    }

    // F* reproducing the quoted futures under these parameters.
    double solve_f_star(double f_quoted) const {
        if (model == ModelKind::mjd) return mjd_intrinsic_futures(f_quoted, mjd_spec(), liability());
        return intrinsic_futures(f_quoted, sigma, tau, liability());
    }

    bool operator==(const ModelParams&) const = default;
};

struct Residual {
    double strike;
    OptionType type;
    double market;
    double model;  // discounted
    double rel;    // (market - model) / market
    std::optional<bool> inside_spread;
};

struct ContractFit {
    std::string contract;
    ModelParams params;
    double rms = 0.0;  // sqrt(mean rel^2) over this chain
    std::vector<Residual> residuals;
    std::vector<std::string> warnings;
};

struct FitResult {
    std::vector<ContractFit> contracts;
    double w = 0.0;
    double objective = 0.0;
    double dispersion = 0.0;  // sum of squared adjacent ln F* ratios
    bool converged = true;
    std::vector<std::string> notes;
};

namespace detail {

// Chain indices sorted by expiry.
inline std::vector<std::size_t> expiry_order(std::span<const OptionChain> chains) {
    std::vector<std::size_t> idx(chains.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        auto da = std::chrono::sys_days(chains[a].expiry_date), db = std::chrono::sys_days(chains[b].expiry_date);
        if (da != db) return da < db;
        return chains[a].tau() < chains[b].tau();
    });
    return idx;
}

inline std::vector<Residual> residuals(const OptionChain& chain, const ModelParams& p) {
    std::vector<Residual> out;
    const double df = p.discount_factor();
    for (const auto& q : chain.quotes) {
        if (!(q.mid > 0.0)) continue;
        double model = df * p.price(q.strike, q.type);
        std::optional<bool> inside;
        if (q.bid && q.ask) inside = model >= *q.bid && model <= *q.ask;
        out.push_back({q.strike, q.type, q.mid, model, (q.mid - model) / q.mid, inside});
    }
    return out;
}

inline double sum_sq_rel(const OptionChain& chain, const ModelParams& p, std::size_t& n) {
    const double df = p.discount_factor();
    double s = 0.0;
    for (const auto& q : chain.quotes) {
        if (!(q.mid > 0.0)) continue;
        double rel = (q.mid - df * p.price(q.strike, q.type)) / q.mid;
        s += rel * rel;
        ++n;
    }
    return s;
}

inline double dispersion(std::span<const OptionChain> chains, std::span<const ModelParams> params) {
    auto order = expiry_order(chains);
    double d = 0.0;
    for (std::size_t i = 1; i < order.size(); ++i) {
        double lr = std::log(params[order[i]].f_star / params[order[i - 1]].f_star);
        d += lr * lr;
    }
    return d;
}

}  // namespace detail

inline double objective(std::span<const OptionChain> chains, std::span<const ModelParams> params, double w) {
    if (chains.size() != params.size()) throw DomainError("objective: one parameter set per chain required");
    if (!(w >= 0.0)) throw DomainError("objective: weight must be >= 0");
    std::size_t n = 0;
    double s = 0.0;
    for (std::size_t i = 0; i < chains.size(); ++i) s += detail::sum_sq_rel(chains[i], params[i], n);
    if (n == 0) throw DomainError("objective: no usable quotes");
    double pen = chains.size() > 1 ? w * w * detail::dispersion(chains, params) : 0.0;
    return std::sqrt(s / n + pen);
}

// ---------------------------------------------------------------------------

namespace detail {

struct NmResult {
    std::vector<double> x;
    double f;
    bool converged;
};

// GSL nmsimplex2, re-started from the best vertex until a restart no longer
// improves the value.
inline NmResult nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                            double step, int max_iter, double size_tol) {
    static const bool handler_off = [] {
        gsl_set_error_handler_off();
        return true;
    }();
    (void)handler_off;

    const std::size_t n = x0.size();
    struct Ctx {
        const std::function<double(const std::vector<double>&)>* f;
        std::vector<double> buf;
    } ctx{&f, std::vector<double>(n)};
    gsl_multimin_function fn;
    fn.n = n;
    fn.params = &ctx;
    fn.f = [](const gsl_vector* v, void* vp) {
        auto* c = static_cast<Ctx*>(vp);
        for (std::size_t i = 0; i < c->buf.size(); ++i) c->buf[i] = gsl_vector_get(v, i);
        double val = (*c->f)(c->buf);
        return std::isfinite(val) ? val : 1e6;
    };

    gsl_vector* x = gsl_vector_alloc(n);
    gsl_vector* ss = gsl_vector_alloc(n);
    gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
    double best = f(x0);
    if (!std::isfinite(best)) best = 1e6;
    bool converged = false;
    for (int round = 0; round < 6; ++round) {
        for (std::size_t i = 0; i < n; ++i) gsl_vector_set(x, i, x0[i]);
        gsl_vector_set_all(ss, round == 0 ? step : 0.25 * step);
        gsl_multimin_fminimizer_set(s, &fn, x, ss);
        converged = false;
        for (int it = 0; it < max_iter; ++it) {
            if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
            if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), size_tol) == GSL_SUCCESS) {
                converged = true;
                break;
            }
        }
        double val = s->fval;
        bool improved = val < best - 1e-14 * std::max(1.0, std::abs(best));
        if (val <= best) {
            for (std::size_t i = 0; i < n; ++i) x0[i] = gsl_vector_get(s->x, i);
            best = val;
        }
        if (!improved) break;
    }
    gsl_multimin_fminimizer_free(s);
    gsl_vector_free(ss);
    gsl_vector_free(x);
    return {x0, best, converged};
}

inline double softplus(double u) { return u > 30.0 ? u : std::log1p(std::exp(u)); }
inline double softplus_inv(double x) { return x > 30.0 ? x : (x < 1e-13 ? -30.0 : std::log(std::expm1(x))); }

// Radical inverse in base b.
inline double halton(std::uint64_t i, unsigned base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
        f /= base;
        r += f * static_cast<double>(i % base);
        i /= base;
    }
    return r;
}

struct ChainProblem {
    const OptionChain* chain;
    ModelKind model;
    double delta;
    double r;

    std::size_t dim() const { return model == ModelKind::mjd ? 6 : 4; }

    // Transformed coordinates: ln sigma, ln K_i, softplus^-1 lambda, softplus^-1 ell[, ln kappa, c].
    std::vector<double> encode(const ModelParams& p) const {
        std::vector<double> u{std::log(p.sigma), std::log(p.k_i), softplus_inv(p.lambda), softplus_inv(p.ell)};
        if (model == ModelKind::mjd) {
            u.push_back(std::log(std::max(p.kappa, 1e-8)));
            u.push_back(p.c);
        }
        return u;
    }

    // Parameters without F*.
    ModelParams decode(std::span<const double> u) const {
        ModelParams p;
        p.model = model;
        p.sigma = std::exp(u[0]);
        p.k_i = std::exp(u[1]);
        p.lambda = softplus(u[2]);
        p.ell = softplus(u[3]);
        if (p.ell < 1e-12) p.ell = 0.0;
        if (model == ModelKind::mjd) {
            p.kappa = std::exp(u[4]);
            p.c = u[5];
            p.delta = delta;
        }
        p.tau = chain->tau();
        p.r = r;
        return p;
    }

    // Completes p with F* from the futures settle; false when unattainable.
    bool pin(ModelParams& p) const {
        if (!(p.sigma > 1e-4 && p.sigma < 50.0 && std::isfinite(p.k_i) && p.k_i > 0.0)) return false;
        if (p.model == ModelKind::mjd && !(p.kappa < 50.0 && std::abs(p.c) < 5.0)) return false;
        try {
            p.f_star = p.solve_f_star(chain->futures);
        } catch (const std::exception&) {
            return false;
        }
        return std::isfinite(p.f_star) && p.f_star > 0.0;
    }

    // Sum of squared relative errors, or infinity.
    double sse(const ModelParams& p, std::size_t& n) const {
        try {
            double v = sum_sq_rel(*chain, p, n);
            return std::isfinite(v) ? v : INFINITY;
        } catch (const std::exception&) {
            return INFINITY;
        }
    }

    double rms(std::span<const double> u) const {
        ModelParams p = decode(u);
        if (!pin(p)) return INFINITY;
        std::size_t n = 0;
        double s = sse(p, n);
        return std::sqrt(s / static_cast<double>(n));
    }

    // Quasi-random start number `index` (Halton, rotated by the seed).
    ModelParams start(std::uint64_t index, std::span<const double> shift) const {
        static constexpr unsigned bases[] = {2, 3, 5, 7, 11, 13};
        std::vector<double> q(dim());
        for (std::size_t k = 0; k < dim(); ++k) q[k] = std::fmod(halton(index + 1, bases[k]) + shift[k], 1.0);
        double scale = std::max(chain->futures, 1.0);
        for (const auto& qt : chain->quotes) scale = std::max(scale, 0.5 * qt.strike);
        ModelParams p;
        p.model = model;
        p.sigma = 0.1 * std::pow(20.0, q[0]);
        p.k_i = scale * 0.5 * std::pow(4.0, q[1]);
        p.lambda = 0.2 + 2.8 * q[2];
        p.ell = 0.05 + 2.95 * q[3];
        if (model == ModelKind::mjd) {
            p.kappa = 0.1 * std::pow(20.0, q[4]);
            p.c = -0.6 + 0.7 * q[5];
            p.delta = delta;
        }
        return p;
    }
};

struct FitSettings {
    double step = 0.4;
    int max_iter = 3000;
    double size_tol = 1e-9;
};

struct LocalFit {
    std::vector<double> u;
    double value;
    bool converged;
};

}  // namespace detail

struct FitOptions {
    ModelKind model = ModelKind::diffusion;
    double w = 5.0;
    std::uint64_t seed = 1;
    int restarts = 8;
    // Optional user start per chain (same order as the chains).
    std::vector<std::optional<ModelParams>> starts;
    double r = 0.0;
    double fixed_delta = 0.5;
    unsigned threads = 1;
};

inline FitResult fit(std::span<const OptionChain> chains, const FitOptions& opt) {
    if (chains.empty()) throw InputError("fit: no chains");
    if (!(opt.w >= 0.0)) throw DomainError("fit: weight must be >= 0");
    if (!opt.starts.empty() && opt.starts.size() != chains.size())
        throw DomainError("fit: starts must be empty or one per chain");

    FitResult res;
    res.w = opt.w;
    std::vector<std::vector<std::string>> warnings;
    for (const auto& c : chains) warnings.push_back(validate_chain(c));

    std::vector<detail::ChainProblem> probs;
    for (const auto& c : chains) probs.push_back({&c, opt.model, opt.fixed_delta, opt.r});
    const detail::FitSettings cfg;

    // Seed-dependent rotation of the quasi-random starts.
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> shift(6);
    for (auto& s : shift) s = unit(rng);

    // Stage 1: each chain alone.
    std::vector<std::vector<double>> best_u(chains.size());
    for (std::size_t ci = 0; ci < chains.size(); ++ci) {
        const auto& prob = probs[ci];
        std::vector<std::vector<double>> starts;
        if (!opt.starts.empty() && opt.starts[ci]) starts.push_back(prob.encode(*opt.starts[ci]));
        for (int k = 0; k < opt.restarts; ++k) starts.push_back(prob.encode(prob.start(k, shift)));
        if (starts.empty()) throw DomainError("fit: no starting points");

        std::vector<detail::LocalFit> runs(starts.size());
        auto run = [&](std::size_t k) {
            auto f = [&](const std::vector<double>& u) { return prob.rms(u); };
            auto r = detail::nelder_mead(f, starts[k], cfg.step, cfg.max_iter, cfg.size_tol);
            runs[k] = {r.x, r.f, r.converged};
        };
        unsigned nt = std::max(1u, opt.threads);
        if (nt == 1) {
            for (std::size_t k = 0; k < starts.size(); ++k) run(k);
        } else {
            std::vector<std::jthread> pool;
            for (unsigned t = 0; t < nt; ++t)
                pool.emplace_back([&, t] {
                    for (std::size_t k = t; k < starts.size(); k += nt) run(k);
                });
        }
        std::size_t pick = 0;
        for (std::size_t k = 1; k < runs.size(); ++k)
            if (runs[k].value < runs[pick].value) pick = k;
        if (!std::isfinite(runs[pick].value) || runs[pick].value >= 1e6)
            throw ConvergenceError("fit: no admissible parameters found for " + chains[ci].contract);
        auto best = runs[pick];
        if (!best.converged) {
            res.converged = false;
            res.notes.push_back(chains[ci].contract + ": simplex did not reach tolerance");
        }

        // The ell = 0 face cannot be reached through the softplus map, so
        // refit sigma there and keep it unless it is measurably worse.
        if (chains[ci].futures > 0.0) {
            auto face = [&](const std::vector<double>& v) {
                std::vector<double> u = best.u;
                u[0] = v[0];
                u[3] = -1e3;
                return prob.rms(u);
            };
            auto r = detail::nelder_mead(face, {best.u[0]}, cfg.step, cfg.max_iter, cfg.size_tol);
            if (r.f <= best.value + face_tolerance) {
                best.u[0] = r.x[0];
                best.u[3] = -1e3;
                best.value = r.f;
            }
        }
        best_u[ci] = best.u;
    }

    // Stage 2: the penalty couples chains, so optimise them jointly.
    if (opt.w > 0.0 && chains.size() > 1) {
        const std::size_t d = probs.front().dim();
        std::vector<double> u0;
        for (const auto& u : best_u) u0.insert(u0.end(), u.begin(), u.end());
        auto joint = [&](const std::vector<double>& u) -> double {
            std::vector<ModelParams> ps;
            std::size_t n = 0;
            double s = 0.0;
            for (std::size_t ci = 0; ci < chains.size(); ++ci) {
                ModelParams p = probs[ci].decode(std::span<const double>(u).subspan(ci * d, d));
                if (!probs[ci].pin(p)) return INFINITY;
                s += probs[ci].sse(p, n);
                ps.push_back(p);
            }
            if (!std::isfinite(s)) return INFINITY;
            double pen = opt.w * opt.w * detail::dispersion(chains, ps);
            return std::sqrt(s / static_cast<double>(n) + pen);
        };
        auto r = detail::nelder_mead(joint, u0, 0.5 * cfg.step, 20 * cfg.max_iter, cfg.size_tol);
        if (r.f <= joint(u0)) {
            for (std::size_t ci = 0; ci < chains.size(); ++ci)
                best_u[ci].assign(r.x.begin() + ci * d, r.x.begin() + (ci + 1) * d);
        }
        if (!r.converged) {
            res.converged = false;
            res.notes.push_back("joint fit: simplex did not reach tolerance");
        }
    }

    std::vector<ModelParams> params;
    for (std::size_t ci = 0; ci < chains.size(); ++ci) {
        ModelParams p = probs[ci].decode(best_u[ci]);
        if (!probs[ci].pin(p)) throw ConvergenceError("fit: final parameters inadmissible for " + chains[ci].contract);
        params.push_back(p);
        ContractFit cf;
        cf.contract = chains[ci].contract;
        cf.params = p;
        cf.residuals = detail::residuals(chains[ci], p);
        double s = 0.0;
        for (const auto& r : cf.residuals) s += r.rel * r.rel;
        cf.rms = std::sqrt(s / static_cast<double>(cf.residuals.size()));
        cf.warnings = warnings[ci];
        res.contracts.push_back(std::move(cf));
    }
    res.objective = objective(chains, params, opt.w);
    res.dispersion = chains.size() > 1 ? detail::dispersion(chains, params) : 0.0;
    return res;
}

inline FitResult fit(std::span<const OptionChain> chains, ModelKind model, double w = 5.0, std::uint64_t seed = 1) {
    FitOptions opt;
    opt.model = model;
    opt.w = w;
    opt.seed = seed;
    return fit(chains, opt);
}

// y_i with F*(T_i) / F*(T_{i+1}) = exp((r - y_i)(T_i - T_{i+1})), inputs ordered by expiry.
inline std::vector<double> convenience_yields(std::span<const double> f_star, std::span<const double> maturities,
                                              double r) {
    if (f_star.size() != maturities.size()) throw DomainError("convenience_yields: size mismatch");
    std::vector<double> y;
    for (std::size_t i = 1; i < f_star.size(); ++i) {
        double dt = maturities[i] - maturities[i - 1];
        if (!(dt > 0.0)) throw DomainError("convenience_yields: maturities must be strictly increasing");
        if (!(f_star[i] > 0.0 && f_star[i - 1] > 0.0)) throw DomainError("convenience_yields: F* must be positive");
        y.push_back(r - std::log(f_star[i] / f_star[i - 1]) / dt);
    }
    return y;
}

inline std::vector<double> convenience_yields(std::span<const ModelParams> fits, double r) {
    std::vector<double> fs, ts;
    for (const auto& p : fits) {
        fs.push_back(p.f_star);
        ts.push_back(p.tau);
    }
    return convenience_yields(fs, ts, r);
}

}  // namespace commodopt
