#include "conqur/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "conqur/error.hpp"

namespace conqur {

std::string exact_decimal(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace {

double decimal_from(const Json& v, const std::string& where) {
    if (v.is_number()) return v.get<double>();
    if (!v.is_string()) throw ParseError(fmt::format("{}: expected a decimal string", where));
    const std::string text = v.get<std::string>();
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(text, &used);
    } catch (const std::exception&) {
        throw ParseError(fmt::format("{}: '{}' is not a number", where, text));
    }
    if (used != text.size()) throw ParseError(fmt::format("{}: '{}' is not a number", where, text));
    return x;
}

const Json& field(const Json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw ParseError(fmt::format("{}: missing field '{}'", where, key));
    return j.at(key);
}

void expect_array(const Json& j, std::size_t n, const std::string& where) {
    if (!j.is_array() || j.size() != n)
        throw ParseError(fmt::format("{}: expected an array of length {}", where, n));
}

}  // namespace

Json mdp_to_json(const Mdp& mdp) {
    Json j;
    j["n_states"] = mdp.n_states;
    j["n_actions"] = mdp.n_actions;
    j["gamma"] = mdp.gamma;
    Json terminal = Json::array();
    for (State s = 0; s < mdp.n_states; ++s)
        if (mdp.is_terminal(s)) terminal.push_back(s);
    j["terminal"] = terminal;
    Json p0 = Json::array();
    for (const double x : mdp.initial) p0.push_back(exact_decimal(x));
    j["p0"] = p0;
    Json r = Json::array();
    Json p = Json::array();
    for (State s = 0; s < mdp.n_states; ++s) {
        Json rs = Json::array();
        Json ps = Json::array();
        for (Action a = 0; a < mdp.n_actions; ++a) {
            rs.push_back(mdp.r(s, a));
            Json row = Json::array();
            for (State t = 0; t < mdp.n_states; ++t) row.push_back(exact_decimal(mdp.p(s, a, t)));
            ps.push_back(row);
        }
        r.push_back(rs);
        p.push_back(ps);
    }
    j["R"] = r;
    j["P"] = p;
    return j;
}

Mdp mdp_from_json(const Json& j) {
    const int n = field(j, "n_states", "mdp").get<int>();
    const int m = field(j, "n_actions", "mdp").get<int>();
    if (n < 1 || m < 1) throw ParseError("mdp: n_states and n_actions must be positive");
    Mdp mdp(n, m, field(j, "gamma", "mdp").get<double>());

    const Json& p0 = field(j, "p0", "mdp");
    expect_array(p0, static_cast<std::size_t>(n), "mdp.p0");
    for (State s = 0; s < n; ++s) mdp.initial[s] = decimal_from(p0[s], fmt::format("mdp.p0[{}]", s));

    const Json& r = field(j, "R", "mdp");
    const Json& p = field(j, "P", "mdp");
    expect_array(r, static_cast<std::size_t>(n), "mdp.R");
    expect_array(p, static_cast<std::size_t>(n), "mdp.P");
    for (State s = 0; s < n; ++s) {
        expect_array(r[s], static_cast<std::size_t>(m), fmt::format("mdp.R[{}]", s));
        expect_array(p[s], static_cast<std::size_t>(m), fmt::format("mdp.P[{}]", s));
        for (Action a = 0; a < m; ++a) {
            mdp.r(s, a) = decimal_from(r[s][a], fmt::format("mdp.R[{}][{}]", s, a));
            expect_array(p[s][a], static_cast<std::size_t>(n), fmt::format("mdp.P[{}][{}]", s, a));
            for (State t = 0; t < n; ++t)
                mdp.p(s, a, t) = decimal_from(p[s][a][t], fmt::format("mdp.P[{}][{}][{}]", s, a, t));
        }
    }
    const Json& terminal = field(j, "terminal", "mdp");
    if (!terminal.is_array()) throw ParseError("mdp.terminal: expected an array");
    for (const auto& t : terminal) {
        const int s = t.get<int>();
        if (s < 0 || s >= n) throw ParseError(fmt::format("mdp.terminal: state {} out of range", s));
        mdp.terminal[s] = 1;
    }
    return mdp;
}

Json features_to_json(const FeatureMap& fm) {
    Json j;
    j["dim"] = fm.dim();
    Json phi = Json::array();
    for (State s = 0; s < fm.n_states(); ++s) {
        Json row = Json::array();
        for (Action a = 0; a < fm.n_actions(); ++a) {
            Json v = Json::array();
            for (int i = 0; i < fm.dim(); ++i) v.push_back(fm.phi(s, a)(i));
            row.push_back(v);
        }
        phi.push_back(row);
    }
    j["phi"] = phi;
    return j;
}

FeatureMap features_from_json(const Json& j, int n_states, int n_actions) {
    const int d = field(j, "dim", "features").get<int>();
    if (d < 1) throw ParseError("features.dim must be positive");
    FeatureMap fm(n_states, n_actions, d);
    const Json& phi = field(j, "phi", "features");
    expect_array(phi, static_cast<std::size_t>(n_states), "features.phi");
    for (State s = 0; s < n_states; ++s) {
        expect_array(phi[s], static_cast<std::size_t>(n_actions), fmt::format("features.phi[{}]", s));
        for (Action a = 0; a < n_actions; ++a) {
            const auto where = fmt::format("features.phi[{}][{}]", s, a);
            expect_array(phi[s][a], static_cast<std::size_t>(d), where);
            for (int i = 0; i < d; ++i) fm.phi(s, a)(i) = decimal_from(phi[s][a][i], where);
        }
    }
    return fm;
}

Json assignment_to_json(const Assignment& sigma) {
    Json out = Json::array();
    for (const auto& [s, a] : sigma.pairs()) out.push_back(Json::array({s, a}));
    return out;
}

std::string save_instance(const Mdp& mdp, const FeatureMap* fm) {
    Json j = mdp_to_json(mdp);
    if (fm) j["features"] = features_to_json(*fm);
    return j.dump(2) + "\n";
}

int line_of(std::string_view text, std::size_t pos) {
    int line = 1;
    for (std::size_t i = 0; i < pos && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

LoadedInstance load_instance(std::string_view text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(fmt::format("line {}: {}", line_of(text, e.byte), e.what()));
    }
    LoadedInstance out;
    try {
        out.mdp = mdp_from_json(j);
        if (j.contains("features")) out.fm = features_from_json(j["features"], out.mdp.n_states, out.mdp.n_actions);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("mdp document: {}", e.what()));
    }
    const auto problems = validate_mdp(out.mdp);
    if (!problems.empty()) {
        std::string msg = "invalid MDP:";
        for (const auto& p : problems) msg += " " + p + ";";
        throw ArgumentError(msg);
    }
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open {}", path));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::string& path, std::string_view content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
        if (ec) throw IoError(fmt::format("cannot create {}: {}", target.parent_path().string(), ec.message()));
    }
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(fmt::format("cannot write {}", tmp.string()));
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError(fmt::format("short write to {}", tmp.string()));
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError(fmt::format("cannot rename {} to {}: {}", tmp.string(), path, ec.message()));
}

}  // namespace conqur
