#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cforge/cli.hpp"

namespace cforge::cli {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

struct KeyValue {
    std::string value;
    int line = 0;
};

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& source_name) {
    std::map<std::string, KeyValue> kv;
    std::string section;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            require(t.back() == ']', Error::Code::Config,
                    source_name + ":" + std::to_string(lineno) + ": malformed section header");
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const std::size_t eq = t.find('=');
        require(eq != std::string::npos, Error::Code::Config,
                source_name + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = section + "." + trim(t.substr(0, eq));
        require(!kv.count(key), Error::Code::Config,
                source_name + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
        kv[key] = {trim(t.substr(eq + 1)), lineno};
    }

    std::set<std::string> seen;
    auto fetch = [&](const std::string& key) -> const KeyValue* {
        auto it = kv.find(key);
        if (it == kv.end()) return nullptr;
        seen.insert(key);
        return &it->second;
    };
    auto parse_double = [&](const std::string& key, double& dst) {
        if (const KeyValue* v = fetch(key)) {
            try {
                std::size_t used = 0;
                dst = std::stod(v->value, &used);
                require(used == v->value.size(), Error::Code::Config, "");
            } catch (...) {
                throw ConfigError(source_name + ":" + std::to_string(v->line) + ": key '" + key +
                                  "' is not a number: '" + v->value + "'");
            }
        }
    };
    auto parse_int = [&](const std::string& key, int& dst) {
        double d = dst;
        parse_double(key, d);
        dst = static_cast<int>(d);
        require(dst == d, Error::Code::Config, "config: key '" + key + "' must be an integer");
    };
    auto parse_u64 = [&](const std::string& key, std::uint64_t& dst) {
        if (const KeyValue* v = fetch(key)) {
            try {
                dst = std::stoull(v->value);
            } catch (...) {
                throw ConfigError(source_name + ": key '" + key + "' is not an integer");
            }
        }
    };
    auto parse_string = [&](const std::string& key, std::string& dst) {
        if (const KeyValue* v = fetch(key)) dst = v->value;
    };
    auto parse_bool = [&](const std::string& key, bool& dst) {
        if (const KeyValue* v = fetch(key)) {
            if (v->value == "true" || v->value == "1")
                dst = true;
            else if (v->value == "false" || v->value == "0")
                dst = false;
            else
                throw ConfigError(source_name + ":" + std::to_string(v->line) + ": key '" + key +
                                  "' must be true/false");
        }
    };

    RunConfig cfg;
    require(kv.count("run.n"), Error::Code::Config,
            source_name + ": missing required key 'run.n'");
    require(kv.count("run.eps"), Error::Code::Config,
            source_name + ": missing required key 'run.eps'");
    require(kv.count("run.a"), Error::Code::Config,
            source_name + ": missing required key 'run.a'");
    require(kv.count("grid.points_per_axis"), Error::Code::Config,
            source_name + ": missing required key 'grid.points_per_axis'");

    parse_int("run.n", cfg.n);
    parse_double("run.eps", cfg.eps);
    parse_double("run.a", cfg.a);
    parse_int("run.stages", cfg.stages);
    parse_u64("run.seed", cfg.seed);
    {
        std::string mode = "relaxed";
        parse_string("run.mode", mode);
        if (mode == "relaxed")
            cfg.mode = stage::Mode::Relaxed;
        else if (mode == "strict")
            cfg.mode = stage::Mode::Strict;
        else
            throw ConfigError(source_name + ": run.mode must be 'strict' or 'relaxed'");
    }
    parse_int("grid.points_per_axis", cfg.points_per_axis);
    parse_double("grid.period", cfg.period);
    parse_string("scenario.name", cfg.scenario);
    parse_double("scenario.deficit", cfg.deficit);
    parse_double("scenario.shrink", cfg.shrink);
    parse_string("scenario.metric_snapshot", cfg.metric_snapshot);
    parse_string("scenario.immersion_snapshot", cfg.immersion_snapshot);
    parse_double("schedule.lambda_star", cfg.lambda_star);
    parse_double("schedule.k_init", cfg.k_init);
    parse_int("schedule.w_depth", cfg.w_depth);
    parse_int("schedule.kallen_depth", cfg.kallen_depth);
    parse_double("schedule.hypothesis_tol", cfg.hypothesis_tol);
    parse_double("schedule.s_max", cfg.s_max);
    parse_string("output.directory", cfg.out_dir);
    parse_bool("output.traces", cfg.export_traces);
    parse_bool("output.mesh", cfg.export_mesh);
    parse_bool("output.csv", cfg.export_csv);

    for (const auto& [key, v] : kv)
        require(seen.count(key) > 0, Error::Code::Config,
                source_name + ":" + std::to_string(v.line) + ": unknown key '" + key + "'");

    require(cfg.scenario == "manufactured-deficit" || cfg.scenario == "shrunk-inclusion" ||
                cfg.scenario == "custom",
            Error::Code::Config, source_name + ": unknown scenario '" + cfg.scenario + "'");
    if (cfg.scenario == "custom")
        require(!cfg.metric_snapshot.empty() && !cfg.immersion_snapshot.empty(), Error::Code::Config,
                source_name + ": custom scenario needs metric_snapshot and immersion_snapshot");
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), Error::Code::Config, "config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

}  // namespace cforge::cli
