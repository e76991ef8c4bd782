// commodopt: pricing, fitting and GL2 simulation from the command line.
//
// Exit codes: 0 ok, 1 domain/model error, 2 input error.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "commodopt/black.hpp"
#include "commodopt/calibration.hpp"
#include "commodopt/gl2.hpp"
#include "commodopt/io.hpp"

using namespace commodopt;
using commodopt::io::format_number;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_domain = 1;
constexpr int exit_input = 2;

OptionType option_type(const std::string& s) {
    auto t = io::parse_option_type(s);
    if (!t) throw InputError("unknown option type '" + s + "' (use call or put)");
    return *t;
}

io::ContractRecord find_contract(const std::vector<io::ContractRecord>& recs, const std::string& id) {
    for (const auto& r : recs)
        if (r.contract == id) return r;
    throw InputError("contract '" + id + "' not found in params file");
}

// a:b:step, inclusive of b up to rounding.
std::vector<double> strike_grid(const std::string& spec) {
    std::vector<double> parts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ':')) {
        auto v = io::parse_number(item);
        if (!v) throw InputError("bad strike range '" + spec + "' (expected a:b:step)");
        parts.push_back(*v);
    }
    if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0])
        throw InputError("bad strike range '" + spec + "' (expected a:b:step with a <= b, step > 0)");
    std::vector<double> ks;
    const long n = static_cast<long>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
    if (n > 1000000) throw InputError("strike range too long");
    for (long i = 0; i <= n; ++i) ks.push_back(parts[0] + static_cast<double>(i) * parts[2]);
    return ks;
}

// "0.06" applies to every chain; "CLM0=0.06" to one.
void apply_tau_overrides(std::vector<OptionChain>& chains, const std::vector<std::string>& specs) {
    for (const auto& s : specs) {
        auto eq = s.find('=');
        std::string id = eq == std::string::npos ? "" : s.substr(0, eq);
        auto v = io::parse_number(eq == std::string::npos ? s : s.substr(eq + 1));
        if (!v || !(*v > 0.0)) throw InputError("bad --tau value '" + s + "'");
        bool hit = false;
        for (auto& c : chains)
            if (id.empty() || c.contract == id) {
                c.tau_override = *v;
                hit = true;
            }
        if (!hit) throw InputError("--tau names unknown contract '" + id + "'");
    }
}

std::string csv_row(std::initializer_list<std::string> cells) {
    std::string out;
    for (const auto& c : cells) {
        if (!out.empty()) out += ",";
        out += c;
    }
    return out + "\n";
}

int cmd_price(const std::string& params_path, const std::string& contract, double strike, const std::string& type) {
    auto rec = find_contract(io::read_params(params_path), contract);
    const auto& p = rec.params;
    OptionType t = option_type(type);
    double undisc = p.price(strike, t);
    double fut = p.futures();
    std::cout << "contract=" << contract << " type=" << to_string(t) << " strike=" << format_number(strike)
              << " undiscounted=" << format_number(undisc) << " discounted=" << format_number(p.discount_factor() * undisc)
              << " futures=" << format_number(fut) << " f_star=" << format_number(p.f_star)
              << " liability=" << format_number(p.f_star - fut) << "\n";
    return exit_ok;
}

int cmd_fit(const std::string& chain_path, const std::string& model, double weight, std::uint64_t seed,
            const std::string& out_path, const std::vector<std::string>& taus, int restarts, double r) {
    auto chains = io::read_chains(chain_path);
    if (chains.empty()) throw InputError(chain_path + ": no quotes");
    apply_tau_overrides(chains, taus);
    auto kind = io::parse_model(model);
    if (!kind) throw InputError("unknown model '" + model + "' (use black-emb or mjd)");
    FitOptions opt;
    opt.model = *kind;
    opt.w = weight;
    opt.seed = seed;
    opt.restarts = restarts;
    opt.r = r;
    auto res = fit(chains, opt);
    io::write_params(out_path, io::records_from_fit(res, chains));

    std::cout << "objective=" << format_number(res.objective) << " weight=" << format_number(res.w)
              << " dispersion=" << format_number(res.dispersion) << " converged=" << (res.converged ? "yes" : "no")
              << "\n";
    std::cout << csv_row({"contract", "model", "sigma", "k_i", "lambda", "ell", "kappa", "c", "delta", "f_star", "tau",
                          "rms"});
    for (const auto& c : res.contracts) {
        const auto& p = c.params;
        bool jumps = p.model == ModelKind::mjd;
        std::cout << csv_row({c.contract, to_string(p.model), format_number(p.sigma), format_number(p.k_i),
                              format_number(p.lambda), format_number(p.ell), jumps ? format_number(p.kappa) : "",
                              jumps ? format_number(p.c) : "", jumps ? format_number(p.delta) : "",
                              format_number(p.f_star), format_number(p.tau), format_number(c.rms)});
    }
    std::cout << csv_row({"contract", "type", "strike", "market", "model", "rel_error", "inside_spread"});
    for (const auto& c : res.contracts)
        for (const auto& q : c.residuals)
            std::cout << csv_row({c.contract, to_string(q.type), format_number(q.strike), format_number(q.market),
                                  format_number(q.model), format_number(q.rel),
                                  q.inside_spread ? (*q.inside_spread ? "yes" : "no") : ""});
    for (const auto& c : res.contracts)
        for (const auto& w : c.warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& n : res.notes) std::cerr << "warning: " << n << "\n";
    return exit_ok;
}

int cmd_smile(const std::string& params_path, const std::string& contract, const std::string& strikes,
              const std::string& type, const std::string& out_path) {
    auto rec = find_contract(io::read_params(params_path), contract);
    const auto& p = rec.params;
    OptionType t = option_type(type);
    const double fut = p.futures();
    std::string out = csv_row({"strike", "type", "price", "black_vol"});
    for (double k : strike_grid(strikes)) {
        double undisc = p.price(k, t);
        std::string vol;
        if (fut > 0.0 && k > 0.0 && p.tau > 0.0) {
            try {
                vol = format_number(black_implied_vol(undisc, fut, k, p.tau, t));
            } catch (const NoSolutionError&) {
            } catch (const ConvergenceError&) {
            }
        }
        out += csv_row({format_number(k), to_string(t), format_number(p.discount_factor() * undisc), vol});
    }
    io::write_text(out_path, out);
    return exit_ok;
}

int cmd_curve(const std::string& params_path, const std::string& out_path) {
    auto recs = io::read_params(params_path);
    std::stable_sort(recs.begin(), recs.end(),
                     [](const auto& a, const auto& b) { return a.params.tau < b.params.tau; });
    std::string out = csv_row({"contract_1", "contract_2", "tau_1", "tau_2", "f_star_1", "f_star_2", "yield"});
    std::vector<ModelParams> ps;
    for (const auto& r : recs) ps.push_back(r.params);
    double r = ps.empty() ? 0.0 : ps.front().r;
    auto ys = convenience_yields(ps, r);
    for (std::size_t i = 0; i < ys.size(); ++i)
        out += csv_row({recs[i].contract, recs[i + 1].contract, format_number(ps[i].tau), format_number(ps[i + 1].tau),
                        format_number(ps[i].f_star), format_number(ps[i + 1].f_star), format_number(ys[i])});
    io::write_text(out_path, out);
    return exit_ok;
}

int cmd_simulate(const std::string& gl2_path, std::size_t paths, std::uint64_t seed, const std::string& out_path,
                 const std::vector<double>& dates_opt, unsigned threads, const std::string& curve_path) {
    auto f = io::read_gl2(gl2_path);
    auto dates = dates_opt.empty() ? f.dates : dates_opt;
    if (dates.empty()) throw InputError("no simulation dates (give 'dates' in the gl2 file or --dates)");
    if (paths == 0) throw InputError("--paths must be positive");
    auto sim = simulate(f.params, dates, paths, seed, threads);
    std::string out = csv_row({"path", "t", "x", "y"});
    for (std::size_t i = 0; i < paths; ++i)
        for (std::size_t k = 0; k < dates.size(); ++k)
            out += csv_row({std::to_string(i), format_number(dates[k]), format_number(sim.x_at(i, k)),
                            format_number(sim.y_at(i, k))});
    io::write_text(out_path, out);
    if (!curve_path.empty()) {
        auto curve = futures_curve(f.params, dates);
        std::string c = csv_row({"t", "f_star", "var_x", "mc_mean_a"});
        for (std::size_t k = 0; k < dates.size(); ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i < paths; ++i) s += std::exp(sim.x_at(i, k));
            c += csv_row({format_number(dates[k]), format_number(curve[k].f_star), format_number(curve[k].var_x),
                          format_number(s / static_cast<double>(paths))});
        }
        io::write_text(curve_path, c);
    }
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Option pricing with embedded delivery liabilities"};
    app.require_subcommand(1);

    std::string params_path, contract, type = "put", chain_path, model = "black-emb", out_path, strikes, gl2_path,
                                      curve_path;
    double strike = 0.0, weight = 5.0, rate = 0.0;
    std::uint64_t seed = 1;
    int restarts = 8;
    std::size_t paths = 1000;
    unsigned threads = 1;
    std::vector<std::string> taus;
    std::vector<double> dates;

    auto* price = app.add_subcommand("price", "Price one option from a params file");
    price->add_option("--params", params_path, "Params JSON")->required();
    price->add_option("--contract", contract, "Contract id")->required();
    price->add_option("--strike", strike, "Strike (may be negative)")->required();
    price->add_option("--type", type, "call or put");

    auto* fitc = app.add_subcommand("fit", "Fit model parameters to option chains");
    fitc->add_option("--chain", chain_path, "Chain CSV")->required();
    fitc->add_option("--model", model, "black-emb or mjd");
    fitc->add_option("--weight", weight, "Weight on the F* dispersion penalty");
    fitc->add_option("--seed", seed, "Seed for the restart points");
    fitc->add_option("--restarts", restarts, "Number of quasi-random restarts");
    fitc->add_option("--rate", rate, "Discount rate r");
    fitc->add_option("--tau", taus, "Override tau: VALUE or CONTRACT=VALUE (repeatable)");
    fitc->add_option("--out", out_path, "Output params JSON")->required();

    auto* smile = app.add_subcommand("smile", "Model prices and Black vols over a strike range");
    smile->add_option("--params", params_path, "Params JSON")->required();
    smile->add_option("--contract", contract, "Contract id")->required();
    smile->add_option("--strikes", strikes, "a:b:step")->required();
    smile->add_option("--type", type, "call or put");
    smile->add_option("--out", out_path, "Output CSV")->required();

    auto* curve = app.add_subcommand("curve", "Convenience yields between adjacent contracts");
    curve->add_option("--params", params_path, "Params JSON")->required();
    curve->add_option("--out", out_path, "Output CSV")->required();

    auto* sim = app.add_subcommand("simulate", "Simulate GL2 paths");
    sim->add_option("--gl2", gl2_path, "GL2 params JSON")->required();
    sim->add_option("--paths", paths, "Number of paths");
    sim->add_option("--seed", seed, "Seed");
    sim->add_option("--dates", dates, "Sample dates in years (overrides the file)");
    sim->add_option("--threads", threads, "Worker threads");
    sim->add_option("--curve-out", curve_path, "Also write F* curve and path means");
    sim->add_option("--out", out_path, "Output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_input;
    }

    try {
        if (*price) return cmd_price(params_path, contract, strike, type);
        if (*fitc) return cmd_fit(chain_path, model, weight, seed, out_path, taus, restarts, rate);
        if (*smile) return cmd_smile(params_path, contract, strikes, type, out_path);
        if (*curve) return cmd_curve(params_path, out_path);
        if (*sim) return cmd_simulate(gl2_path, paths, seed, out_path, dates, threads, curve_path);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_input;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_domain;
    } catch (const ConvergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_domain;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_domain;
    }
    return exit_input;
}
