#include "tsad/config.hpp"

#include "tsad/checkpoint.hpp"
#include "tsad/error.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <sstream>

namespace tsad {

namespace pt = boost::property_tree;

LabelFormat parse_label_format(const std::string& name) {
    if (name == "none" || name.empty()) return LabelFormat::none;
    if (name == "index") return LabelFormat::index;
    if (name == "nasa") return LabelFormat::nasa;
    if (name == "nab") return LabelFormat::nab;
    throw ConfigError("unknown label format '" + name + "' (none, index, nasa, nab)");
}

std::string to_string(LabelFormat format) {
    switch (format) {
        case LabelFormat::none: return "none";
        case LabelFormat::index: return "index";
        case LabelFormat::nasa: return "nasa";
        case LabelFormat::nab: return "nab";
    }
    return "?";
}

ArchConfig RunConfig::effective_arch() const {
    ArchConfig a = arch;
    a.window = window;
    return a;
}

TrainConfig RunConfig::effective_train() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
}

DetectConfig RunConfig::detect_config() const {
    DetectConfig d;
    d.window = window;
    d.theta = theta;
    d.lambda = lambda;
    d.batch_size = detect_batch;
    d.sample_posterior = sample_posterior;
    d.seed = seed;
    d.impute = impute;
    return d;
}

void RunConfig::validate() const {
    if (window < 2 || window % 2 != 0) throw ConfigError("window.size must be an even integer >= 2");
    if (step < 1) throw ConfigError("window.step must be >= 1");
    if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
    if (!(theta >= 0.0)) throw ConfigError("detect.theta must be >= 0");
    if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("detect.lambda must lie in (0, 1]");
    if (detect_batch < 1) throw ConfigError("detect.batch_size must be positive");
    train.validate();
    effective_arch().validate();
}

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    std::istringstream in(value);
    T out{};
    in >> out;
    if (in.fail() || !(in >> std::ws).eof()) throw ConfigError(key + ": cannot parse '" + value + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw ConfigError(key + ": expected a boolean, got '" + value + "'");
}

// shortest text that parses back to the same double
std::string fmt(double v) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{
        "data.path",          "data.format",         "data.labels",        "data.labels_format",
        "window.size",        "window.step",         "train.epoch",        "train.epoch_gan",
        "train.batch_size",   "train.lr_vae",        "train.lr_gan",       "train.alpha",
        "train.beta",         "train.margin",        "train.checkpoint_every", "arch.level_channels",
        "arch.cells_per_level", "arch.groups",       "arch.sigma_floor",   "detect.theta",
        "detect.lambda",      "detect.sample_posterior", "detect.batch_size", "run.output",
        "run.seed",           "run.impute"};
    return keys;
}

std::map<std::string, std::string> config_values(const RunConfig& c) {
    return {{"data.path", c.data_path.string()},
            {"data.format", to_string(c.format)},
            {"data.labels", c.labels_path.string()},
            {"data.labels_format", to_string(c.label_format)},
            {"window.size", std::to_string(c.window)},
            {"window.step", std::to_string(c.step)},
            {"train.epoch", std::to_string(c.train.epoch)},
            {"train.epoch_gan", std::to_string(c.train.epoch_gan)},
            {"train.batch_size", std::to_string(c.train.batch_size)},
            {"train.lr_vae", fmt(c.train.lr_vae)},
            {"train.lr_gan", fmt(c.train.lr_gan)},
            {"train.alpha", fmt(c.train.alpha)},
            {"train.beta", fmt(c.train.beta)},
            {"train.margin", fmt(c.train.margin)},
            {"train.checkpoint_every", std::to_string(c.checkpoint_every)},
            {"arch.level_channels", format_int_list(c.arch.level_channels)},
            {"arch.cells_per_level", format_int_list(c.arch.cells_per_level)},
            {"arch.groups", format_groups(c.arch.groups)},
            {"arch.sigma_floor", fmt(c.arch.sigma_floor)},
            {"detect.theta", fmt(c.theta)},
            {"detect.lambda", fmt(c.lambda)},
            {"detect.sample_posterior", c.sample_posterior ? "true" : "false"},
            {"detect.batch_size", std::to_string(c.detect_batch)},
            {"run.output", c.output.string()},
            {"run.seed", std::to_string(c.seed)},
            {"run.impute", to_string(c.impute)}};
}

RunConfig apply_overrides(RunConfig c, const std::map<std::string, std::string>& values) {
    for (const auto& [key, v] : values) {
        if (key == "data.path") c.data_path = v;
        else if (key == "data.format") c.format = parse_series_format(v);
        else if (key == "data.labels") c.labels_path = v;
        else if (key == "data.labels_format") c.label_format = parse_label_format(v);
        else if (key == "window.size") c.window = parse_number<int>(key, v);
        else if (key == "window.step") c.step = parse_number<int>(key, v);
        else if (key == "train.epoch") c.train.epoch = parse_number<int>(key, v);
        else if (key == "train.epoch_gan") c.train.epoch_gan = parse_number<int>(key, v);
        else if (key == "train.batch_size") c.train.batch_size = parse_number<int>(key, v);
        else if (key == "train.lr_vae") c.train.lr_vae = parse_number<double>(key, v);
        else if (key == "train.lr_gan") c.train.lr_gan = parse_number<double>(key, v);
        else if (key == "train.alpha") c.train.alpha = parse_number<double>(key, v);
        else if (key == "train.beta") c.train.beta = parse_number<double>(key, v);
        else if (key == "train.margin") c.train.margin = parse_number<double>(key, v);
        else if (key == "train.checkpoint_every") c.checkpoint_every = parse_number<int>(key, v);
        else if (key == "arch.level_channels") c.arch.level_channels = parse_int_list(v);
        else if (key == "arch.cells_per_level") c.arch.cells_per_level = parse_int_list(v);
        else if (key == "arch.groups") c.arch.groups = parse_groups(v);
        else if (key == "arch.sigma_floor") c.arch.sigma_floor = parse_number<double>(key, v);
        else if (key == "detect.theta") c.theta = parse_number<double>(key, v);
        else if (key == "detect.lambda") c.lambda = parse_number<double>(key, v);
        else if (key == "detect.sample_posterior") c.sample_posterior = parse_bool(key, v);
        else if (key == "detect.batch_size") c.detect_batch = parse_number<int>(key, v);
        else if (key == "run.output") c.output = v;
        else if (key == "run.seed") c.seed = parse_number<std::uint64_t>(key, v);
        else if (key == "run.impute") c.impute = parse_impute_policy(v);
        else throw ConfigError("unknown config key '" + key + "'");
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path, const RunConfig& base) {
    pt::ptree tree;
    try {
        pt::read_ini(path.string(), tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(e.what());
    }
    std::map<std::string, std::string> values;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty())
            throw ConfigError(path.string() + ": key '" + section + "' outside a section");
        for (const auto& [key, leaf] : body) values[section + "." + key] = leaf.get_value<std::string>();
    }
    return apply_overrides(base, values);
}

void save_config(const std::filesystem::path& path, const RunConfig& cfg) {
    pt::ptree tree;
    const auto values = config_values(cfg);
    for (const auto& key : config_keys()) tree.put(pt::ptree::path_type(key, '.'), values.at(key));
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    pt::write_ini(path.string(), tree);
}

}  // namespace tsad
