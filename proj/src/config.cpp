#include "uegan/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace uegan {

namespace {

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

bool parse_bool(const std::string& s, const std::string& key) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("bad boolean for " + key + ": " + s);
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

struct Field {
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<std::pair<std::string, Field>>& fields() {
    auto d = [](auto getter, auto setter) {
        return Field{[getter](const RunConfig& c) { return fmt_double(getter(c)); },
                     [setter](RunConfig& c, const std::string& s) { setter(c, std::stod(s)); }};
    };
    auto i = [](auto getter, auto setter) {
        return Field{[getter](const RunConfig& c) { return std::to_string(getter(c)); },
                     [setter](RunConfig& c, const std::string& s) { setter(c, std::stoi(s)); }};
    };
    auto b = [](auto getter, auto setter) {
        return Field{
            [getter](const RunConfig& c) { return std::string(getter(c) ? "true" : "false"); },
            [setter](RunConfig& c, const std::string& s) { setter(c, parse_bool(s, "")); }};
    };
    static const std::vector<std::pair<std::string, Field>> table = {
        {"base_channels", i([](const RunConfig& c) { return c.model.base_channels; },
                            [](RunConfig& c, int v) { c.model.base_channels = v; })},
        {"depth", i([](const RunConfig& c) { return c.model.depth; },
                    [](RunConfig& c, int v) { c.model.depth = v; })},
        {"input_channels", i([](const RunConfig& c) { return c.model.input_channels; },
                             [](RunConfig& c, int v) { c.model.input_channels = v; })},
        {"leaky_slope", d([](const RunConfig& c) { return c.model.leaky_slope; },
                          [](RunConfig& c, double v) { c.model.leaky_slope = v; })},
        {"edge_dilation_kernel",
         i([](const RunConfig& c) { return c.model.edge_dilation_kernel; },
           [](RunConfig& c, int v) { c.model.edge_dilation_kernel = v; })},
        {"use_refinement", b([](const RunConfig& c) { return c.model.use_refinement; },
                             [](RunConfig& c, bool v) { c.model.use_refinement = v; })},
        {"use_uam", b([](const RunConfig& c) { return c.model.use_uam; },
                      [](RunConfig& c, bool v) { c.model.use_uam = v; })},
        {"alpha1", d([](const RunConfig& c) { return c.alpha1; },
                     [](RunConfig& c, double v) { c.alpha1 = v; })},
        {"dice_epsilon", d([](const RunConfig& c) { return c.dice_epsilon; },
                           [](RunConfig& c, double v) { c.dice_epsilon = v; })},
        {"adv_weight", d([](const RunConfig& c) { return c.adv_weight; },
                         [](RunConfig& c, double v) { c.adv_weight = v; })},
        {"ds_weight", d([](const RunConfig& c) { return c.ds_weight; },
                        [](RunConfig& c, double v) { c.ds_weight = v; })},
        {"deep_supervision", b([](const RunConfig& c) { return c.deep_supervision; },
                               [](RunConfig& c, bool v) { c.deep_supervision = v; })},
        {"rho", i([](const RunConfig& c) { return c.metric.rho; },
                  [](RunConfig& c, int v) { c.metric.rho = v; })},
        {"object_iou_threshold",
         d([](const RunConfig& c) { return c.metric.object_iou_threshold; },
           [](RunConfig& c, double v) { c.metric.object_iou_threshold = v; })},
        {"connectivity", i([](const RunConfig& c) { return c.metric.connectivity; },
                           [](RunConfig& c, int v) { c.metric.connectivity = v; })},
        {"lr0", d([](const RunConfig& c) { return c.lr0; },
                  [](RunConfig& c, double v) { c.lr0 = v; })},
        {"power", d([](const RunConfig& c) { return c.power; },
                    [](RunConfig& c, double v) { c.power = v; })},
        {"weight_decay", d([](const RunConfig& c) { return c.weight_decay; },
                           [](RunConfig& c, double v) { c.weight_decay = v; })},
        {"beta1", d([](const RunConfig& c) { return c.beta1; },
                    [](RunConfig& c, double v) { c.beta1 = v; })},
        {"beta2", d([](const RunConfig& c) { return c.beta2; },
                    [](RunConfig& c, double v) { c.beta2 = v; })},
        {"adam_eps", d([](const RunConfig& c) { return c.adam_eps; },
                       [](RunConfig& c, double v) { c.adam_eps = v; })},
        {"steps", i([](const RunConfig& c) { return c.steps; },
                    [](RunConfig& c, int v) { c.steps = v; })},
        {"batch_size", i([](const RunConfig& c) { return c.batch_size; },
                         [](RunConfig& c, int v) { c.batch_size = v; })},
        {"image_size", i([](const RunConfig& c) { return c.image_size; },
                         [](RunConfig& c, int v) { c.image_size = v; })},
        {"train_count", i([](const RunConfig& c) { return c.train_count; },
                          [](RunConfig& c, int v) { c.train_count = v; })},
        {"val_count", i([](const RunConfig& c) { return c.val_count; },
                        [](RunConfig& c, int v) { c.val_count = v; })},
        {"seed", Field{[](const RunConfig& c) { return std::to_string(c.seed); },
                       [](RunConfig& c, const std::string& s) { c.seed = std::stoull(s); }}},
    };
    return table;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        bool found = false;
        for (const auto& [k, f] : fields()) {
            if (k == key) {
                try {
                    f.set(cfg, value);
                } catch (const ConfigError&) {
                    throw;
                } catch (const std::exception&) {
                    throw ConfigError("bad value for " + key + ": " + value);
                }
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError("unknown config key: " + key);
    }
    cfg.validate();
    return cfg;
}

std::string serialize_run_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& [k, f] : fields()) out += k + " = " + f.get(cfg) + "\n";
    return out;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config " + path);
    out << serialize_run_config(cfg);
}

}  // namespace uegan
