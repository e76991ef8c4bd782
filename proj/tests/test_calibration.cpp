#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "commodopt/calibration.hpp"

using namespace commodopt;
using namespace std::chrono;

namespace {

ModelParams clm0() {
    ModelParams p;
    p.sigma = 1.09;
    p.k_i = 21.7;
    p.lambda = 0.921;
    p.ell = 2.2;
    p.f_star = 20.42;
    p.tau = 23.0 / 365.0;
    return p;
}

ModelParams cln0() {
    ModelParams p;
    p.sigma = 1.25;
    p.k_i = 29.6;
    p.lambda = 0.532;
    p.ell = 0.52;
    p.f_star = 23.17;
    p.tau = 57.0 / 365.0;
    return p;
}

ModelParams clq0() {
    ModelParams p;
    p.sigma = 0.88;
    p.k_i = 27.4;
    p.lambda = 1.754;
    p.ell = 0.11;
    p.f_star = 24.64;
    p.tau = 86.0 / 365.0;
    return p;
}

ModelParams cln0_mjd() {
    ModelParams p;
    p.model = ModelKind::mjd;
    p.sigma = 0.56;
    p.kappa = 0.66;
    p.c = -0.30;
    p.delta = 0.5;
    p.k_i = 11.73;
    p.lambda = 2.0;
    p.ell = 1.0;
    p.f_star = 38.94;
    p.tau = 8.0 / 365.0;
    return p;
}

// Puts priced exactly by `p` at the given strikes; quote date fixed, expiry from tau.
OptionChain synth(const std::string& id, const ModelParams& p, std::vector<double> strikes,
                  OptionType type = OptionType::put) {
    OptionChain c;
    c.contract = id;
    c.quote_date = year_month_day{year{2020} / April / 21};
    c.expiry_date = year_month_day{sys_days(c.quote_date) + days(static_cast<int>(std::lround(p.tau * 365.0)))};
    c.tau_override = p.tau;
    c.futures = p.futures();
    for (double k : strikes) c.quotes.push_back({k, type, p.discount_factor() * p.price(k, type), {}, {}});
    return c;
}

std::vector<double> range(double a, double b, double step = 1.0) {
    std::vector<double> v;
    for (double k = a; k <= b + 1e-9; k += step) v.push_back(k);
    return v;
}

double price_rms(const OptionChain& chain, const ModelParams& p) {
    std::vector<OptionChain> cs{chain};
    std::vector<ModelParams> ps{p};
    return objective(cs, ps, 0.0);
}

}  // namespace

TEST(Chain, TauIsAct365) {
    OptionChain c;
    c.quote_date = year_month_day{year{2020} / April / 21};
    c.expiry_date = year_month_day{year{2020} / May / 14};
    EXPECT_DOUBLE_EQ(c.tau(), 23.0 / 365.0);
    c.tau_override = 0.1;
    EXPECT_DOUBLE_EQ(c.tau(), 0.1);
}

TEST(Chain, Validation) {
    auto c = synth("CLM0", clm0(), {5, 10, 15});
    try {
        validate_chain(c);
        FAIL() << "expected InputError";
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("CLM0"), std::string::npos);
    }
    c = synth("CLM0", clm0(), {5, 10, 15, 20});
    EXPECT_TRUE(validate_chain(c).empty());
    auto dup = c;
    dup.quotes[2].strike = 10;
    EXPECT_THROW(validate_chain(dup), InputError);
    // Same strike on the other side is fine.
    auto mixed = c;
    mixed.quotes.push_back({10.0, OptionType::call, 3.0, {}, {}});
    EXPECT_NO_THROW(validate_chain(mixed));
    auto arb = c;
    arb.quotes[1].mid = arb.quotes[0].mid * 0.5;  // put price falls with strike
    EXPECT_FALSE(validate_chain(arb).empty());
    auto zero = synth("X", clm0(), {5, 10, 15, 20, 25});
    zero.quotes[0].mid = 0.0;
    auto w = validate_chain(zero);
    ASSERT_FALSE(w.empty());
    EXPECT_NE(w.front().find("excluded"), std::string::npos);
    zero.quotes[1].mid = -1.0;
    EXPECT_THROW(validate_chain(zero), InputError);
}

TEST(Objective, ZeroAtGeneratingParameters) {
    auto p = clm0();
    auto c = synth("CLM0", p, range(1, 30));
    std::vector<OptionChain> cs{c};
    std::vector<ModelParams> ps{p};
    EXPECT_LT(objective(cs, ps, 5.0), 1e-12);

    // Several chains with a common F*: the penalty vanishes too.
    auto q = cln0();
    q.f_star = p.f_star;
    auto r = clq0();
    r.f_star = p.f_star;
    std::vector<OptionChain> cs3{c, synth("CLN0", q, range(1, 40)), synth("CLQ0", r, range(1, 40))};
    std::vector<ModelParams> ps3{p, q, r};
    EXPECT_LT(objective(cs3, ps3, 5.0), 1e-12);
}

TEST(Objective, WeightZeroIsPooledRms) {
    std::vector<OptionChain> cs{synth("CLM0", clm0(), range(1, 30)), synth("CLN0", cln0(), range(1, 40))};
    std::vector<ModelParams> ps{clm0(), cln0()};
    ps[0].sigma *= 1.1;
    ps[1].ell *= 0.8;
    double s = 0.0;
    std::size_t n = 0;
    for (int i = 0; i < 2; ++i)
        for (const auto& q : cs[i].quotes) {
            double rel = (q.mid - ps[i].price(q.strike, q.type)) / q.mid;
            s += rel * rel;
            ++n;
        }
    EXPECT_NEAR(objective(cs, ps, 0.0), std::sqrt(s / n), 1e-14);
    double lr = std::log(ps[1].f_star / ps[0].f_star);
    EXPECT_NEAR(objective(cs, ps, 5.0), std::sqrt(s / n + 25.0 * lr * lr), 1e-14);
    // A single chain ignores the weight.
    std::vector<OptionChain> one{cs[0]};
    std::vector<ModelParams> p1{ps[0]};
    EXPECT_EQ(objective(one, p1, 0.0), objective(one, p1, 7.0));
}

TEST(Objective, QuoteOrderInvariant) {
    auto c = synth("CLM0", clm0(), range(1, 30));
    auto p = clm0();
    p.sigma = 0.9;
    p.lambda = 1.2;
    std::vector<OptionChain> cs{c};
    std::vector<ModelParams> ps{p};
    double e0 = objective(cs, ps, 5.0);
    std::mt19937_64 rng(4);
    for (int i = 0; i < 5; ++i) {
        std::shuffle(cs[0].quotes.begin(), cs[0].quotes.end(), rng);
        EXPECT_NEAR(objective(cs, ps, 5.0), e0, 1e-15);
    }
}

TEST(Objective, ChainOrderInvariant) {
    std::vector<OptionChain> cs{synth("CLM0", clm0(), range(1, 30)), synth("CLN0", cln0(), range(1, 40)),
                                synth("CLQ0", clq0(), range(1, 40))};
    std::vector<ModelParams> ps{clm0(), cln0(), clq0()};
    double e0 = objective(cs, ps, 5.0);
    std::swap(cs[0], cs[2]);
    std::swap(ps[0], ps[2]);
    EXPECT_NEAR(objective(cs, ps, 5.0), e0, 1e-15);
}

TEST(Objective, NonPositiveMidExcluded) {
    auto c = synth("CLM0", clm0(), range(1, 30));
    c.quotes[3].mid = 0.0;
    std::vector<OptionChain> cs{c};
    std::vector<ModelParams> ps{clm0()};
    EXPECT_LT(objective(cs, ps, 0.0), 1e-12);
}

TEST(ConvenienceYield, AdjacentContracts) {
    std::vector<double> fs{20.42, 23.17, 24.64};
    std::vector<double> ts{0.0, 34.0 / 365.0, 63.0 / 365.0};
    auto y = convenience_yields(fs, ts, 0.0);
    ASSERT_EQ(y.size(), 2u);
    EXPECT_NEAR(y[0], -1.356, 5e-4);
    EXPECT_NEAR(y[1], -0.774, 5e-4);
    // Oracle: direct solve of F1/F2 = exp((r - y)(T1 - T2)).
    EXPECT_NEAR(std::exp((0.0 - y[0]) * (ts[0] - ts[1])), fs[0] / fs[1], 1e-14);
}

TEST(ConvenienceYield, EqualFStarGivesRate) {
    std::vector<double> fs{30.0, 30.0};
    std::vector<double> ts{0.1, 0.3};
    EXPECT_NEAR(convenience_yields(fs, ts, 0.025)[0], 0.025, 1e-15);
    std::vector<double> one{30.0}, t1{0.1};
    EXPECT_TRUE(convenience_yields(one, t1, 0.0).empty());
}

TEST(Fit, RoundTripDiffusion) {
    auto truth = clm0();
    auto chain = synth("CLM0", truth, range(1, 30));
    FitOptions opt;
    opt.w = 5.0;
    opt.seed = 7;
    auto start = truth;
    start.sigma *= 1.3;
    start.k_i *= 0.85;
    start.lambda *= 1.4;
    start.ell *= 0.7;
    opt.starts = {start};
    std::vector<OptionChain> cs{chain};
    auto res = fit(cs, opt);
    ASSERT_EQ(res.contracts.size(), 1u);
    EXPECT_LE(res.objective, 0.005);
    EXPECT_LE(price_rms(chain, res.contracts[0].params), 0.005);
    const auto& p = res.contracts[0].params;
    EXPECT_GT(p.sigma, 0.0);
    EXPECT_GT(p.k_i, 0.0);
    EXPECT_GE(p.lambda, 0.0);
    EXPECT_GE(p.ell, 0.0);
    EXPECT_NEAR(p.futures(), chain.futures, 1e-9);
}

TEST(Fit, RoundTripMjd) {
    auto truth = cln0_mjd();
    auto chain = synth("CLN0", truth, range(20, 55));
    FitOptions opt;
    opt.model = ModelKind::mjd;
    opt.seed = 3;
    auto start = truth;
    start.sigma *= 0.8;
    start.kappa *= 1.5;
    start.c = -0.2;
    start.ell *= 1.3;
    opt.starts = {start};
    std::vector<OptionChain> cs{chain};
    auto res = fit(cs, opt);
    EXPECT_LE(res.objective, 0.005);
    EXPECT_EQ(res.contracts[0].params.delta, 0.5);
    EXPECT_EQ(res.contracts[0].params.model, ModelKind::mjd);
}

TEST(Fit, ZeroLiabilityReachable) {
    auto truth = clm0();
    truth.ell = 0.0;
    truth.sigma = 0.6;
    truth.f_star = 25.0;
    auto chain = synth("FLAT", truth, range(10, 40));
    std::vector<OptionChain> cs{chain};
    auto res = fit(cs, ModelKind::diffusion, 5.0, 11);
    EXPECT_LT(res.contracts[0].params.ell, 1e-3);
    EXPECT_LE(res.objective, 1e-6);
}

TEST(Fit, ResidualsRecombineToObjective) {
    std::vector<OptionChain> cs{synth("CLM0", clm0(), range(1, 30)), synth("CLN0", cln0(), range(1, 40))};
    FitOptions opt;
    opt.restarts = 3;
    auto res = fit(cs, opt);
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& c : res.contracts)
        for (const auto& r : c.residuals) {
            s += r.rel * r.rel;
            ++n;
            EXPECT_NEAR(r.rel, (r.market - r.model) / r.market, 1e-15);
        }
    double lr = std::log(res.contracts[1].params.f_star / res.contracts[0].params.f_star);
    EXPECT_NEAR(res.objective, std::sqrt(s / n + opt.w * opt.w * lr * lr), 1e-12);
    EXPECT_NEAR(res.dispersion, lr * lr, 1e-15);
    EXPECT_GE(res.objective, 0.0);
}

TEST(Fit, DeterministicPerSeed) {
    std::vector<OptionChain> cs{synth("CLM0", clm0(), range(1, 30))};
    FitOptions opt;
    opt.seed = 42;
    opt.restarts = 4;
    auto a = fit(cs, opt);
    auto b = fit(cs, opt);
    opt.threads = 4;
    auto c = fit(cs, opt);
    EXPECT_EQ(a.contracts[0].params, b.contracts[0].params);
    EXPECT_EQ(a.contracts[0].params, c.contracts[0].params);
    EXPECT_EQ(a.objective, b.objective);
    EXPECT_EQ(a.objective, c.objective);
}

TEST(Fit, PenaltyMonotonicity) {
    std::vector<OptionChain> cs{synth("CLM0", clm0(), range(1, 30)), synth("CLN0", cln0(), range(1, 40)),
                                synth("CLQ0", clq0(), range(1, 40))};
    FitOptions opt;
    opt.restarts = 4;
    double prev = INFINITY;
    for (double w : {0.0, 0.5, 5.0, 25.0}) {
        opt.w = w;
        auto res = fit(cs, opt);
        EXPECT_LE(res.dispersion, prev) << "w=" << w;
        prev = res.dispersion;
    }
}

TEST(Fit, RejectsShortChain) {
    std::vector<OptionChain> cs{synth("CLX0", clm0(), {5, 10, 15})};
    try {
        fit(cs, ModelKind::diffusion);
        FAIL();
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("CLX0"), std::string::npos);
    }
}
