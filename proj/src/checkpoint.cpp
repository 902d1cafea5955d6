#include "tsad/checkpoint.hpp"

#include "tsad/error.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tsad {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'T', 'S', 'A', 'D', 'C', 'K', 'P', 'T'};

json arch_json(const ArchConfig& a) {
    json groups = json::array();
    for (const auto& g : a.groups) groups.push_back({{"level", g.level}, {"channels", g.channels}});
    return {{"window", a.window},
            {"in_channels", a.in_channels},
            {"level_channels", a.level_channels},
            {"cells_per_level", a.cells_per_level},
            {"groups", groups},
            {"sigma_floor", a.sigma_floor}};
}

ArchConfig arch_from(const json& j) {
    ArchConfig a;
    a.window = j.at("window").get<int>();
    a.in_channels = j.at("in_channels").get<int>();
    a.level_channels = j.at("level_channels").get<std::vector<int>>();
    a.cells_per_level = j.at("cells_per_level").get<std::vector<int>>();
    a.groups.clear();
    for (const auto& g : j.at("groups")) a.groups.push_back({g.at("level").get<int>(), g.at("channels").get<int>()});
    a.sigma_floor = j.at("sigma_floor").get<double>();
    a.validate();
    return a;
}

void write_file(const fs::path& path, const json& header, const std::vector<float>& payload) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const std::string text = header.dump();
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw InvalidInput("cannot write " + tmp.string());
        const std::uint32_t version = kCheckpointVersion;
        const std::uint64_t len = text.size();
        out.write(kMagic, sizeof kMagic);
        out.write(reinterpret_cast<const char*>(&version), sizeof version);
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        out.write(reinterpret_cast<const char*>(payload.data()),
                  static_cast<std::streamsize>(payload.size() * sizeof(float)));
        if (!out) throw InvalidInput("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

}  // namespace

ModelKind parse_model_kind(const std::string& name) {
    if (name == "hvae") return ModelKind::hvae;
    if (name == "identity") return ModelKind::identity;
    if (name == "zero") return ModelKind::zero;
    throw ConfigError("unknown model kind '" + name + "' (hvae, identity, zero)");
}

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::hvae: return "hvae";
        case ModelKind::identity: return "identity";
        case ModelKind::zero: return "zero";
    }
    return "?";
}

std::unique_ptr<Reconstructor> Checkpoint::reconstructor(bool sample_posterior, std::uint64_t seed) const {
    switch (kind) {
        case ModelKind::hvae:
            if (!model) throw InvalidInput("checkpoint has no model");
            return std::make_unique<VaeReconstructor>(*model, sample_posterior, seed);
        case ModelKind::identity: return std::make_unique<IdentityReconstructor>(window);
        case ModelKind::zero: return std::make_unique<ZeroReconstructor>(window);
    }
    throw InvalidInput("bad model kind");
}

void save_checkpoint(const fs::path& path, const std::string& series_id, const HierarchicalVae<float>& model,
                     const StandardizationParams& standardization) {
    json header;
    header["kind"] = "hvae";
    header["series_id"] = series_id;
    header["window"] = model.arch().window;
    header["arch"] = arch_json(model.arch());
    header["standardization"] = {{"mean", standardization.mean}, {"std", standardization.std}};
    json table = json::array();
    std::vector<float> payload;
    for (const auto& p : model.parameters()) {
        const auto s = p.var.shape();
        table.push_back({{"name", p.name},
                         {"role", p.role == ParamRole::encoder ? "encoder" : "decoder"},
                         {"shape", {s.n, s.c, s.h, s.w}},
                         {"offset", payload.size()}});
        payload.insert(payload.end(), p.var.value().begin(), p.var.value().end());
    }
    header["params"] = std::move(table);
    header["payload_floats"] = payload.size();
    write_file(path, header, payload);
}

void save_stub_checkpoint(const fs::path& path, const std::string& series_id, ModelKind kind, int window,
                          const StandardizationParams& standardization) {
    if (kind == ModelKind::hvae) throw InvalidInput("save_stub_checkpoint: hvae needs a model");
    json header;
    header["kind"] = to_string(kind);
    header["series_id"] = series_id;
    header["window"] = window;
    header["standardization"] = {{"mean", standardization.mean}, {"std", standardization.std}};
    header["params"] = json::array();
    header["payload_floats"] = 0;
    write_file(path, header, {});
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open checkpoint " + path.string());
    char magic[8];
    std::uint32_t version = 0;
    std::uint64_t len = 0;
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError(path.string() + ": not a checkpoint");
    if (version != kCheckpointVersion)
        throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    if (len > (1u << 28)) throw FormatError(path.string() + ": implausible header length");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw FormatError(path.string() + ": truncated header");

    Checkpoint ck;
    try {
        const json header = json::parse(text);
        ck.kind = parse_model_kind(header.at("kind").get<std::string>());
        ck.series_id = header.at("series_id").get<std::string>();
        ck.window = header.at("window").get<int>();
        ck.standardization.mean = header.at("standardization").at("mean").get<double>();
        ck.standardization.std = header.at("standardization").at("std").get<double>();
        const auto floats = header.at("payload_floats").get<std::size_t>();
        std::vector<float> payload(floats);
        in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(floats * sizeof(float)));
        if (!in) throw FormatError(path.string() + ": truncated payload");
        if (ck.kind != ModelKind::hvae) return ck;

        HierarchicalVae<float> model(arch_from(header.at("arch")), 0);
        const auto& table = header.at("params");
        auto& params = model.parameters();
        if (table.size() != params.size())
            throw FormatError(path.string() + ": parameter table does not match the architecture");
        std::vector<std::vector<float>> values;
        for (std::size_t i = 0; i < params.size(); ++i) {
            const auto& row = table[i];
            if (row.at("name").get<std::string>() != params[i].name)
                throw FormatError(path.string() + ": expected parameter " + params[i].name + ", found " +
                                  row.at("name").get<std::string>());
            const auto off = row.at("offset").get<std::size_t>();
            const auto n = params[i].var.value().size();
            if (off + n > payload.size()) throw FormatError(path.string() + ": parameter outside payload");
            values.emplace_back(payload.begin() + static_cast<std::ptrdiff_t>(off),
                                payload.begin() + static_cast<std::ptrdiff_t>(off + n));
        }
        model.restore(values);
        ck.model.emplace(std::move(model));
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return ck;
}

std::string arch_to_json(const ArchConfig& arch) { return arch_json(arch).dump(); }

ArchConfig arch_from_json(const std::string& text) {
    try {
        return arch_from(json::parse(text));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("architecture: ") + e.what());
    }
}

std::string format_int_list(const std::vector<int>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
    return out;
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("expected a comma-separated integer list, got '" + text + "'");
        }
    }
    return out;
}

std::string format_groups(const std::vector<GroupPlacement>& groups) {
    std::string out;
    for (std::size_t i = 0; i < groups.size(); ++i)
        out += (i ? "," : "") + std::to_string(groups[i].level) + ":" + std::to_string(groups[i].channels);
    return out;
}

std::vector<GroupPlacement> parse_groups(const std::string& text) {
    std::vector<GroupPlacement> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("group '" + item + "' is not level:channels");
        const auto nums = parse_int_list(item.substr(0, colon) + "," + item.substr(colon + 1));
        out.push_back({nums[0], nums[1]});
    }
    if (out.empty()) throw ConfigError("no latent groups in '" + text + "'");
    return out;
}

}  // namespace tsad
