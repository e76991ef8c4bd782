#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <string>

#include "commodopt/io.hpp"

using namespace commodopt;
using namespace commodopt::io;

namespace {

const char* sample =
    "contract,quote_date,expiry_date,futures,type,strike,mid,bid,ask\n"
    "CLM0,2020-04-21,2020-05-14,11.57,put,-5,0.41,0.3,0.5\n"
    "CLM0,2020-04-21,2020-05-14,11.57,put,0,1.12,1.0,1.25\n"
    "CLM0,2020-04-21,2020-05-14,11.57,put,5,2.57,,\n"
    "CLN0,2020-04-21,2020-06-17,18.69,call,20,3.15,3,3.3\n"
    "CLM0,2020-04-21,2020-05-14,11.57,call,15,1.89,1.8,2\n";

std::string error_of(const std::string& text) {
    try {
        parse_chains(text);
    } catch (const InputError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(ChainCsv, ParsesAndGroups) {
    auto cs = parse_chains(sample);
    ASSERT_EQ(cs.size(), 2u);
    EXPECT_EQ(cs[0].contract, "CLM0");
    EXPECT_EQ(cs[0].quotes.size(), 4u);
    EXPECT_EQ(cs[1].quotes.size(), 1u);
    EXPECT_DOUBLE_EQ(cs[0].futures, 11.57);
    EXPECT_DOUBLE_EQ(cs[0].quotes[0].strike, -5.0);
    EXPECT_EQ(cs[0].quotes[0].type, OptionType::put);
    ASSERT_TRUE(cs[0].quotes[0].bid);
    EXPECT_DOUBLE_EQ(*cs[0].quotes[0].ask, 0.5);
    EXPECT_FALSE(cs[0].quotes[2].bid);
    EXPECT_EQ(cs[0].quotes[3].type, OptionType::call);
    EXPECT_DOUBLE_EQ(cs[0].tau(), 23.0 / 365.0);
    EXPECT_DOUBLE_EQ(cs[1].tau(), 57.0 / 365.0);
}

TEST(ChainCsv, NegativeFuturesAccepted) {
    auto cs = parse_chains("contract,quote_date,expiry_date,futures,type,strike,mid\n"
                           "CLK0,2020-04-20,2020-04-21,-37.63,put,-40,1.5\n");
    EXPECT_DOUBLE_EQ(cs[0].futures, -37.63);
}

TEST(ChainCsv, ColumnOrderFree) {
    auto cs = parse_chains("mid,strike,type,futures,expiry_date,quote_date,contract\n"
                           "1.5,10,put,20,2020-06-01,2020-05-01,X\n");
    EXPECT_DOUBLE_EQ(cs[0].quotes[0].mid, 1.5);
    EXPECT_DOUBLE_EQ(cs[0].tau(), 31.0 / 365.0);
}

TEST(ChainCsv, Errors) {
    EXPECT_NE(error_of("contract,quote_date,expiry_date,futures,type,strike,mid,vega\n").find("'vega'"),
              std::string::npos);
    EXPECT_NE(error_of("contract,quote_date,expiry_date,futures,type,strike\n").find("'mid'"), std::string::npos);
    EXPECT_NE(error_of("").find("header"), std::string::npos);
    const std::string head = "contract,quote_date,expiry_date,futures,type,strike,mid\n";
    const std::string good = "A,2020-04-21,2020-05-14,11.57,put,5,2.5\n";
    EXPECT_NE(error_of(head + good + "A,2020-04-21,2020-05-14,11.57,put,abc,2.5\n").find("row 3"), std::string::npos);
    EXPECT_NE(error_of(head + good + good + "A,2020-02-30,2020-05-14,11.57,put,6,2.5\n").find("row 4"),
              std::string::npos);
    EXPECT_NE(error_of(head + "A,2020-04-21,2020-05-14,11.57,straddle,5,2.5\n").find("row 2"), std::string::npos);
    EXPECT_NE(error_of(head + "A,2020-04-21,2020-05-14,11.57,put,5\n").find("row 2"), std::string::npos);
    EXPECT_NE(error_of(head + good + "A,2020-04-21,2020-05-14,12.00,put,6,2.5\n").find("row 3"), std::string::npos);
    EXPECT_NE(error_of(head + "A,2020-04-21,2020-05-14,nan,put,5,2.5\n").find("row 2"), std::string::npos);
    EXPECT_NE(error_of(head + "A,20-04-21,2020-05-14,1,put,5,2.5\n").find("row 2"), std::string::npos);
}

TEST(ChainCsv, CrLfAndBlankLines) {
    auto cs = parse_chains("contract,quote_date,expiry_date,futures,type,strike,mid\r\n"
                           "A,2020-04-21,2020-05-14,11.57,put,5,2.5\r\n\r\n"
                           "A,2020-04-21,2020-05-14,11.57,put,6,2.9\r\n");
    ASSERT_EQ(cs.size(), 1u);
    EXPECT_EQ(cs[0].quotes.size(), 2u);
}

TEST(ChainCsv, RoundTripAtTenDigits) {
    auto once = serialize_chains(parse_chains(sample));
    auto twice = serialize_chains(parse_chains(once));
    EXPECT_EQ(once, twice);

    // Random values survive to 10 significant digits.
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-100.0, 100.0);
    OptionChain c;
    c.contract = "RND";
    c.quote_date = std::chrono::year_month_day{std::chrono::year{2021} / 1 / 31};
    c.expiry_date = std::chrono::year_month_day{std::chrono::year{2021} / 3 / 1};
    c.futures = u(rng);
    for (int i = 0; i < 50; ++i) c.quotes.push_back({u(rng), i % 2 ? OptionType::call : OptionType::put,
                                                     std::abs(u(rng)) / 7.0, std::nullopt, std::nullopt});
    auto text = serialize_chains({c});
    auto back = parse_chains(text);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].quote_date, c.quote_date);
    EXPECT_EQ(back[0].expiry_date, c.expiry_date);
    EXPECT_NEAR(back[0].futures, c.futures, 1e-9 * std::abs(c.futures));
    for (std::size_t i = 0; i < c.quotes.size(); ++i) {
        EXPECT_NEAR(back[0].quotes[i].strike, c.quotes[i].strike, 1e-9 * std::abs(c.quotes[i].strike));
        EXPECT_NEAR(back[0].quotes[i].mid, c.quotes[i].mid, 1e-9 * std::abs(c.quotes[i].mid));
        EXPECT_EQ(back[0].quotes[i].type, c.quotes[i].type);
    }
    EXPECT_EQ(serialize_chains(back), text);
}

TEST(Dates, Parse) {
    auto d = parse_date("2020-02-29");
    ASSERT_TRUE(d);
    EXPECT_EQ(format_date(*d), "2020-02-29");
    EXPECT_FALSE(parse_date("2021-02-29"));
    EXPECT_FALSE(parse_date("2021-13-01"));
    EXPECT_FALSE(parse_date("2021-1-01"));
    EXPECT_FALSE(parse_date("2021-01-0a"));
}

TEST(ParamsJson, RoundTrip) {
    ModelParams a;
    a.sigma = 1.09;
    a.k_i = 21.7;
    a.lambda = 0.921;
    a.ell = 2.2;
    a.f_star = 20.42;
    a.tau = 23.0 / 365.0;
    ModelParams b;
    b.model = ModelKind::mjd;
    b.sigma = 0.56;
    b.kappa = 0.66;
    b.c = -0.3;
    b.delta = 0.5;
    b.k_i = 11.73;
    b.lambda = 2.0;
    b.ell = 1.0 / 3.0;
    b.f_star = 38.94;
    b.tau = 0.1;
    b.r = 0.01;
    std::vector<ContractRecord> recs{{"CLM0", a, 11.57, 0.014}, {"CLN0", b, std::nullopt, std::nullopt}};
    auto text = records_to_json(recs).dump(2);
    auto back = records_from_json(parse_json_text(text, "test"));
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].contract, "CLM0");
    EXPECT_EQ(back[0].params, a);
    EXPECT_EQ(back[1].params, b);
    EXPECT_EQ(*back[0].futures, 11.57);
    EXPECT_FALSE(back[1].rms);
    EXPECT_EQ(records_to_json(back).dump(2), text);
}

TEST(ParamsJson, FromFitResult) {
    FitResult res;
    ContractFit cf;
    cf.contract = "Z";
    cf.params.sigma = 0.3;
    cf.params.k_i = 10.0;
    cf.params.lambda = 1.0;
    cf.params.ell = 0.0;
    cf.params.f_star = 12.345678901234567;
    cf.params.tau = 0.25;
    cf.rms = 1e-3;
    res.contracts.push_back(cf);
    auto recs = records_from_fit(res, {});
    auto back = records_from_json(records_to_json(recs));
    EXPECT_EQ(back[0].params, cf.params);
}

TEST(ParamsJson, Errors) {
    auto err = [](const std::string& text) {
        try {
            records_from_json(parse_json_text(text, "t"));
        } catch (const InputError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    EXPECT_NE(err("{\"A\": {\"model\": \"diffusion\", \"sigma\": 1}}").find("missing"), std::string::npos);
    EXPECT_NE(err("{\"A\": {\"model\": \"heston\"}}").find("heston"), std::string::npos);
    EXPECT_NE(err("{\"A\": {\"model\": \"diffusion\", \"sigmaa\": 1}}").find("sigmaa"), std::string::npos);
    EXPECT_NE(err("[1, 2]").find("object"), std::string::npos);
    EXPECT_NE(err("{not json").find("t"), std::string::npos);
    EXPECT_THROW(read_params("/nonexistent/file.json"), InputError);
}

TEST(Gl2Json, Parse) {
    auto f = gl2_from_json(json::parse(R"({"kappa": 1.5, "beta": 0.4, "alpha": {"start": [0, 0.5], "value": [0.1, -0.2]},
        "sigma_a": 0.3, "sigma_y": 0.2, "rho": 0.1, "r": 0.01, "a0": 25, "y0": 0.05, "dates": [0.25, 0.5, 1]})"));
    EXPECT_DOUBLE_EQ(f.params.x0, std::log(25.0));
    EXPECT_DOUBLE_EQ(f.params.alpha(0.7), -0.2);
    EXPECT_EQ(f.dates.size(), 3u);
    auto g = gl2_from_json(gl2_to_json(f));
    EXPECT_EQ(g.params.x0, f.params.x0);
    EXPECT_EQ(g.params.alpha.value, f.params.alpha.value);
    EXPECT_EQ(g.dates, f.dates);
    EXPECT_THROW(gl2_from_json(json::parse(R"({"kappa": 1, "sigma_a": 0.3})")), InputError);
    EXPECT_THROW(gl2_from_json(json::parse(R"({"kappa": 1, "sigma_a": 0.3, "x0": 1, "a0": 2})")), InputError);
    EXPECT_THROW(gl2_from_json(json::parse(R"({"kappa": 1, "sigma_a": 0.3, "x0": 1, "gamma": 2})")), InputError);
    auto c = gl2_from_json(json::parse(R"({"kappa": 1, "sigma_a": 0.3, "x0": 1, "alpha": 0.2})"));
    EXPECT_DOUBLE_EQ(c.params.alpha(3.0), 0.2);
}
