#include "revdeq/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include "json.hpp"

namespace revdeq {

namespace {

using nlohmann::json;

double as_double(const json& v, const std::string& key) {
    if (!v.is_number()) throw config_error("config key '" + key + "' must be a number");
    return v.get<double>();
}

int as_int(const json& v, const std::string& key) {
    if (!v.is_number_integer())
        throw config_error("config key '" + key + "' must be an integer");
    return v.get<int>();
}

std::uint64_t as_u64(const json& v, const std::string& key) {
    if (!v.is_number_unsigned() && !v.is_number_integer())
        throw config_error("config key '" + key + "' must be a non-negative integer");
    auto i = v.get<std::int64_t>();
    if (i < 0) throw config_error("config key '" + key + "' must be a non-negative integer");
    return static_cast<std::uint64_t>(i);
}

std::string as_str(const json& v, const std::string& key) {
    if (!v.is_string()) throw config_error("config key '" + key + "' must be a string");
    return v.get<std::string>();
}

}  // namespace

void RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw config_error("cannot open config file " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw config_error("config file " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw config_error("config file must hold a JSON object");

    for (const auto& [key, v] : j.items()) {
        if (key == "beta") beta = as_double(v, key);
        else if (key == "tol") tol = as_double(v, key);
        else if (key == "max_steps") max_steps = as_int(v, key);
        else if (key == "precision") precision = as_str(v, key);
        else if (key == "stop") stop = as_str(v, key);
        else if (key == "cell") cell = as_str(v, key);
        else if (key == "engine") engine = as_str(v, key);
        else if (key == "seed") seed = as_u64(v, key);
        else if (key == "beta_grid") beta_grid = as_str(v, key);
        else if (key == "k_grid") k_grid = as_str(v, key);
        else if (key == "n_grid") n_grid = as_str(v, key);
        else if (key == "policy_grid") policy_grid = as_str(v, key);
        else if (key == "sweep_max_steps") sweep_max_steps = as_int(v, key);
        else if (key == "dataset") dataset = as_str(v, key);
        else if (key == "n_per_class") n_per_class = as_int(v, key);
        else if (key == "noise") noise = as_double(v, key);
        else if (key == "turns") turns = as_double(v, key);
        else if (key == "data_seed") data_seed = as_u64(v, key);
        else if (key == "width") width = as_int(v, key);
        else if (key == "hidden") hidden = as_int(v, key);
        else if (key == "k") k = as_double(v, key);
        else if (key == "lr0") lr0 = as_double(v, key);
        else if (key == "train_steps") train_steps = as_int(v, key);
        else if (key == "batch") batch = as_int(v, key);
        else if (key == "weight_cap") weight_cap = as_double(v, key);
        else if (key == "solver_steps") solver_steps = as_int(v, key);
        else if (key == "window") window = as_int(v, key);
        else if (key == "patience") patience = as_int(v, key);
        else if (key == "cooldown") cooldown = as_int(v, key);
        else if (key == "floor_factor") floor_factor = as_double(v, key);
        else if (key == "out") out = as_str(v, key);
        else if (key == "checkpoint_path") checkpoint_path = as_str(v, key);
        else throw config_error("unknown config key '" + key + "'");
    }
}

TrainTask RunConfig::to_train_task() const {
    TrainTask t;
    if (dataset == "spirals") t.dataset = "two-spirals";
    else if (dataset == "regression") t.dataset = "synthetic-regression";
    else t.dataset = dataset;
    if (n_per_class < 1) throw config_error("config key 'n_per_class' must be >= 1");
    t.n_per_class = static_cast<std::size_t>(n_per_class);
    t.noise = noise;
    t.turns = turns;
    t.data_seed = data_seed;
    if (width < 1 || hidden < 1)
        throw config_error("config keys 'width' and 'hidden' must be >= 1");
    t.width = static_cast<std::size_t>(width);
    t.hidden = static_cast<std::size_t>(hidden);
    t.k = k;
    t.beta = beta;
    t.solver_steps = solver_steps;
    t.lr0 = lr0;
    t.steps = train_steps;
    if (batch < 1) throw config_error("config key 'batch' must be >= 1");
    t.batch = static_cast<std::size_t>(batch);
    t.weight_cap = weight_cap;
    t.schedule.window = window;
    t.schedule.patience = patience;
    t.schedule.cooldown = cooldown;
    t.schedule.floor_factor = floor_factor;
    t.seed = seed;
    return t;
}

ExperimentSpec RunConfig::to_experiment_spec(const std::string& kind) const {
    ExperimentSpec spec;
    spec.kind = kind;
    spec.betas = parse_double_grid(beta_grid);
    spec.ks = parse_double_grid(k_grid);
    spec.Ns = parse_int_grid(n_grid);
    spec.policies.clear();
    std::string item;
    for (std::size_t i = 0; i <= policy_grid.size(); ++i) {
        if (i == policy_grid.size() || policy_grid[i] == ',') {
            if (!item.empty()) spec.policies.push_back(policy_from_name(item));
            item.clear();
        } else {
            item += policy_grid[i];
        }
    }
    spec.seed = seed;
    spec.tol = tol;
    spec.max_steps = sweep_max_steps;
    return spec;
}

SolverConfig RunConfig::to_solver_config() const {
    SolverConfig cfg;
    cfg.beta = beta;
    cfg.tol = tol;
    cfg.max_steps = max_steps;
    cfg.policy = policy_from_name(precision);
    if (stop == "fixed") cfg.stop_rule = StopRule::fixed_steps;
    else if (stop == "residual") cfg.stop_rule = StopRule::residual;
    else throw config_error("config key 'stop' must be fixed|residual, got '" + stop + "'");
    return cfg;
}

namespace {

std::vector<std::string> split_commas(const std::string& text) {
    std::vector<std::string> parts;
    std::string item;
    for (std::size_t i = 0; i <= text.size(); ++i) {
        if (i == text.size() || text[i] == ',') {
            if (!item.empty()) parts.push_back(item);
            item.clear();
        } else if (!std::isspace(static_cast<unsigned char>(text[i]))) {
            item += text[i];
        }
    }
    return parts;
}

double parse_num(const std::string& s, const std::string& grid) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw config_error("bad grid value '" + s + "' in '" + grid + "'");
    }
}

}  // namespace

std::vector<double> parse_double_grid(const std::string& text) {
    if (text.empty()) throw config_error("empty grid");
    std::size_t c1 = text.find(':');
    if (c1 != std::string::npos) {
        std::size_t c2 = text.find(':', c1 + 1);
        if (c2 == std::string::npos)
            throw config_error("range grid '" + text + "' needs lo:hi:step");
        double lo = parse_num(text.substr(0, c1), text);
        double hi = parse_num(text.substr(c1 + 1, c2 - c1 - 1), text);
        double step = parse_num(text.substr(c2 + 1), text);
        if (!(step > 0.0)) throw config_error("grid step must be positive in '" + text + "'");
        if (hi < lo) throw config_error("grid range is empty in '" + text + "'");
        std::vector<double> vals;
        for (int i = 0;; ++i) {
            double v = lo + i * step;
            if (v > hi + step * 0.5) break;
            vals.push_back(v);
        }
        return vals;
    }
    std::vector<double> vals;
    for (const auto& s : split_commas(text)) vals.push_back(parse_num(s, text));
    if (vals.empty()) throw config_error("empty grid '" + text + "'");
    return vals;
}

std::vector<int> parse_int_grid(const std::string& text) {
    std::vector<int> vals;
    for (double v : parse_double_grid(text)) {
        int i = static_cast<int>(std::llround(v));
        if (std::fabs(v - i) > 1e-9)
            throw config_error("grid '" + text + "' must hold integers");
        vals.push_back(i);
    }
    return vals;
}

std::filesystem::path resolve_out_path(const std::string& out) {
    std::filesystem::path p(out);
    if (p.is_absolute()) return p;
    const char* dir = std::getenv("REVDEQ_OUT_DIR");
    if (dir && *dir) return std::filesystem::path(dir) / p;
    return p;
}

}  // namespace revdeq
