#pragma once

// File formats: option chains as CSV, fitted parameters and GL2 parameter
// records as JSON.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "commodopt/calibration.hpp"
#include "commodopt/errors.hpp"
#include "commodopt/gl2.hpp"

namespace commodopt::io {

using json = nlohmann::ordered_json;

// 10 significant digits.
inline std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string format_date(const std::chrono::year_month_day& d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                  static_cast<unsigned>(d.day()));
    return buf;
}

inline std::optional<double> parse_number(std::string_view s) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) return std::nullopt;
    return v;
}

// YYYY-MM-DD
inline std::optional<std::chrono::year_month_day> parse_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    int y = 0;
    unsigned m = 0, d = 0;
    auto digits = [](std::string_view t, auto& out) {
        if (!std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
            return false;
        auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
        return ec == std::errc() && p == t.data() + t.size();
    };
    if (!digits(s.substr(0, 4), y) || !digits(s.substr(5, 2), m) || !digits(s.substr(8, 2), d)) return std::nullopt;
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) return std::nullopt;
    return ymd;
}

inline std::optional<OptionType> parse_option_type(std::string_view s) {
    std::string t(s);
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    if (t == "call" || t == "c") return OptionType::call;
    if (t == "put" || t == "p") return OptionType::put;
    return std::nullopt;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        std::size_t pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace detail

inline constexpr const char* chain_columns[] = {"contract", "quote_date", "expiry_date", "futures",
                                                "type",     "strike",     "mid",         "bid",
                                                "ask"};

// Rows are grouped by contract in order of first appearance. Chain fields
// (dates, futures) must agree across a contract's rows. Errors name the
// 1-based line number.
inline std::vector<OptionChain> parse_chains(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t pos = text.find('\n', start);
        std::string_view line = text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    if (lines.empty() || detail::trim(lines[0]).empty()) throw InputError("chain file: missing header row");
    std::string_view header = lines[0];
    if (header.size() >= 3 && header.substr(0, 3) == "\xEF\xBB\xBF") header.remove_prefix(3);

    std::map<std::string, std::size_t> col;
    auto names = detail::split(header);
    for (std::size_t i = 0; i < names.size(); ++i) {
        std::string name(names[i]);
        if (std::find(std::begin(chain_columns), std::end(chain_columns), name) == std::end(chain_columns))
            throw InputError("chain file: unknown column '" + name + "'");
        if (!col.emplace(name, i).second) throw InputError("chain file: duplicate column '" + name + "'");
    }
    for (const char* req : {"contract", "quote_date", "expiry_date", "futures", "type", "strike", "mid"})
        if (!col.count(req)) throw InputError(std::string("chain file: missing column '") + req + "'");

    std::vector<OptionChain> chains;
    std::map<std::string, std::size_t> index;
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (detail::trim(lines[ln]).empty()) continue;
        const std::string where = "chain file row " + std::to_string(ln + 1) + ": ";
        auto f = detail::split(lines[ln]);
        if (f.size() != names.size())
            throw InputError(where + "expected " + std::to_string(names.size()) + " fields, got " +
                             std::to_string(f.size()));
        auto num = [&](const char* name) {
            auto v = parse_number(f[col.at(name)]);
            if (!v) throw InputError(where + "bad number in '" + name + "': '" + std::string(f[col.at(name)]) + "'");
            return *v;
        };
        auto opt_num = [&](const char* name) -> std::optional<double> {
            if (!col.count(name) || f[col.at(name)].empty()) return std::nullopt;
            return num(name);
        };
        auto date = [&](const char* name) {
            auto d = parse_date(f[col.at(name)]);
            if (!d) throw InputError(where + "bad date in '" + name + "': '" + std::string(f[col.at(name)]) + "'");
            return *d;
        };
        std::string id(f[col.at("contract")]);
        if (id.empty()) throw InputError(where + "empty contract id");
        auto type = parse_option_type(f[col.at("type")]);
        if (!type) throw InputError(where + "bad option type '" + std::string(f[col.at("type")]) + "'");
        auto qd = date("quote_date");
        auto ed = date("expiry_date");
        double fut = num("futures");
        Quote q{num("strike"), *type, num("mid"), opt_num("bid"), opt_num("ask")};

        auto it = index.find(id);
        if (it == index.end()) {
            index.emplace(id, chains.size());
            OptionChain c;
            c.contract = id;
            c.quote_date = qd;
            c.expiry_date = ed;
            c.futures = fut;
            chains.push_back(std::move(c));
            it = index.find(id);
        }
        OptionChain& c = chains[it->second];
        if (c.quote_date != qd || c.expiry_date != ed || c.futures != fut)
            throw InputError(where + "dates/futures differ from earlier rows of " + id);
        c.quotes.push_back(q);
    }
    return chains;
}

inline std::vector<OptionChain> read_chains(const std::string& path) { return parse_chains(detail::read_file(path)); }

inline std::string serialize_chains(const std::vector<OptionChain>& chains) {
    bool spread = false;
    for (const auto& c : chains)
        for (const auto& q : c.quotes) spread = spread || q.bid || q.ask;
    std::string out = "contract,quote_date,expiry_date,futures,type,strike,mid";
    if (spread) out += ",bid,ask";
    out += "\n";
    for (const auto& c : chains)
        for (const auto& q : c.quotes) {
            out += c.contract + "," + format_date(c.quote_date) + "," + format_date(c.expiry_date) + "," +
                   format_number(c.futures) + "," + to_string(q.type) + "," + format_number(q.strike) + "," +
                   format_number(q.mid);
            if (spread) {
                out += ",";
                if (q.bid) out += format_number(*q.bid);
                out += ",";
                if (q.ask) out += format_number(*q.ask);
            }
            out += "\n";
        }
    return out;
}

// --- Parameters -------------------------------------------------------------

inline std::optional<ModelKind> parse_model(std::string_view s) {
    if (s == "diffusion" || s == "black-emb") return ModelKind::diffusion;
    if (s == "mjd") return ModelKind::mjd;
    return std::nullopt;
}

struct ContractRecord {
    std::string contract;
    ModelParams params;
    std::optional<double> futures;  // quoted settle, informational
    std::optional<double> rms;
};

inline json params_to_json(const ModelParams& p) {
    json j;
    j["model"] = to_string(p.model);
    j["sigma"] = p.sigma;
    j["k_i"] = p.k_i;
    j["lambda"] = p.lambda;
    j["ell"] = p.ell;
    if (p.model == ModelKind::mjd) {
        j["kappa"] = p.kappa;
        j["c"] = p.c;
        j["delta"] = p.delta;
    }
    j["f_star"] = p.f_star;
    j["tau"] = p.tau;
    j["r"] = p.r;
    return j;
}

inline ModelParams params_from_json(const json& j, const std::string& id) {
    const std::string where = "params for " + id + ": ";
    if (!j.is_object()) throw InputError(where + "expected an object");
    static const std::set<std::string> known{"model", "sigma", "k_i", "lambda", "ell", "kappa", "c",
                                             "delta", "f_star", "tau", "r", "futures", "rms"};
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw InputError(where + "unknown key '" + k + "'");
    auto num = [&](const char* k, std::optional<double> def = std::nullopt) {
        if (!j.contains(k)) {
            if (def) return *def;
            throw InputError(where + "missing '" + k + "'");
        }
        if (!j.at(k).is_number()) throw InputError(where + "'" + k + "' must be a number");
        return j.at(k).get<double>();
    };
    ModelParams p;
    if (!j.contains("model") || !j.at("model").is_string()) throw InputError(where + "missing 'model'");
    auto m = parse_model(j.at("model").get<std::string>());
    if (!m) throw InputError(where + "unknown model '" + j.at("model").get<std::string>() + "'");
    p.model = *m;
    p.sigma = num("sigma");
    p.k_i = num("k_i");
    p.lambda = num("lambda");
    p.ell = num("ell");
    if (p.model == ModelKind::mjd) {
        p.kappa = num("kappa");
        p.c = num("c");
        p.delta = num("delta", 0.5);
    }
    p.f_star = num("f_star");
    p.tau = num("tau");
    p.r = num("r", 0.0);
    return p;
}

inline json records_to_json(const std::vector<ContractRecord>& recs) {
    json j = json::object();
    for (const auto& r : recs) {
        json e = params_to_json(r.params);
        if (r.futures) e["futures"] = *r.futures;
        if (r.rms) e["rms"] = *r.rms;
        j[r.contract] = e;
    }
    return j;
}

inline std::vector<ContractRecord> records_from_json(const json& j) {
    if (!j.is_object()) throw InputError("params file: top level must be an object keyed by contract");
    std::vector<ContractRecord> out;
    for (const auto& [id, v] : j.items()) {
        ContractRecord r{id, params_from_json(v, id), std::nullopt, std::nullopt};
        for (const char* k : {"futures", "rms"})
            if (v.contains(k) && !v.at(k).is_number())
                throw InputError("params for " + id + ": '" + k + "' must be a number");
        if (v.contains("futures")) r.futures = v.at("futures").get<double>();
        if (v.contains("rms")) r.rms = v.at("rms").get<double>();
        out.push_back(r);
    }
    return out;
}

inline std::vector<ContractRecord> records_from_fit(const FitResult& res, std::span<const OptionChain> chains) {
    std::vector<ContractRecord> out;
    for (std::size_t i = 0; i < res.contracts.size(); ++i) {
        const auto& c = res.contracts[i];
        std::optional<double> fut;
        for (const auto& ch : chains)
            if (ch.contract == c.contract) fut = ch.futures;
        out.push_back({c.contract, c.params, fut, c.rms});
    }
    return out;
}

inline json parse_json_text(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(what + ": " + e.what());
    }
}

inline std::vector<ContractRecord> read_params(const std::string& path) {
    return records_from_json(parse_json_text(detail::read_file(path), path));
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << text;
    if (!out) throw InputError("write failed for " + path);
}

inline void write_params(const std::string& path, const std::vector<ContractRecord>& recs) {
    write_text(path, records_to_json(recs).dump(2) + "\n");
}

// --- GL2 records ------------------------------------------------------------

struct Gl2File {
    Gl2Params params;
    std::vector<double> dates;  // simulation / curve dates (years)
};

inline Gl2File gl2_from_json(const json& j) {
    const std::string where = "gl2 record: ";
    if (!j.is_object()) throw InputError(where + "expected an object");
    static const std::set<std::string> known{"kappa", "beta", "alpha", "sigma_a", "sigma_y", "rho",
                                             "r",     "x0",   "a0",    "y0",      "kappa_x", "dates"};
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw InputError(where + "unknown key '" + k + "'");
    auto num = [&](const char* k, std::optional<double> def = std::nullopt) {
        if (!j.contains(k)) {
            if (def) return *def;
            throw InputError(where + "missing '" + k + "'");
        }
        if (!j.at(k).is_number()) throw InputError(where + "'" + k + "' must be a number");
        return j.at(k).get<double>();
    };
    auto num_list = [&](const json& v, const std::string& name) {
        if (!v.is_array()) throw InputError(where + "'" + name + "' must be an array");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) throw InputError(where + "'" + name + "' must hold numbers");
            out.push_back(e.get<double>());
        }
        return out;
    };
    Gl2File f;
    auto& p = f.params;
    p.kappa = num("kappa");
    p.beta = num("beta", 0.0);
    p.sigma_a = num("sigma_a");
    p.sigma_y = num("sigma_y", 0.0);
    p.rho = num("rho", 0.0);
    p.r = num("r", 0.0);
    p.y0 = num("y0", 0.0);
    p.kappa_x = num("kappa_x", 0.0);
    if (j.contains("x0") == j.contains("a0")) throw InputError(where + "give exactly one of 'x0' and 'a0'");
    p.x0 = j.contains("x0") ? num("x0") : std::log(num("a0"));
    if (!std::isfinite(p.x0)) throw InputError(where + "'a0' must be positive");
    if (!j.contains("alpha")) {
        p.alpha = PiecewiseConstant::constant(0.0);
    } else if (j.at("alpha").is_number()) {
        p.alpha = PiecewiseConstant::constant(j.at("alpha").get<double>());
    } else if (j.at("alpha").is_object()) {
        const auto& a = j.at("alpha");
        if (!a.contains("start") || !a.contains("value")) throw InputError(where + "'alpha' needs 'start' and 'value'");
        p.alpha = {num_list(a.at("start"), "alpha.start"), num_list(a.at("value"), "alpha.value")};
    } else {
        throw InputError(where + "'alpha' must be a number or {start, value}");
    }
    if (j.contains("dates")) f.dates = num_list(j.at("dates"), "dates");
    return f;
}

inline json gl2_to_json(const Gl2File& f) {
    const auto& p = f.params;
    json j;
    j["kappa"] = p.kappa;
    j["beta"] = p.beta;
    if (p.alpha.start.size() == 1) j["alpha"] = p.alpha.value.front();
    else j["alpha"] = {{"start", p.alpha.start}, {"value", p.alpha.value}};
    j["sigma_a"] = p.sigma_a;
    j["sigma_y"] = p.sigma_y;
    j["rho"] = p.rho;
    j["r"] = p.r;
    j["x0"] = p.x0;
    j["y0"] = p.y0;
    j["kappa_x"] = p.kappa_x;
    if (!f.dates.empty()) j["dates"] = f.dates;
    return j;
}

inline Gl2File read_gl2(const std::string& path) { return gl2_from_json(parse_json_text(detail::read_file(path), path)); }

}  // namespace commodopt::io
