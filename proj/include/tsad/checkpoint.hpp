#pragma once

#include "tsad/detect.hpp"
#include "tsad/hvae.hpp"
#include "tsad/ingest.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace tsad {

// Binary layout:
//   8 bytes  "TSADCKPT"
//   u32      format version
//   u64      header length
//   header   JSON: kind, series id, window, architecture, standardization,
//            parameter table (name, role, shape, element offset)
//   payload  float32 parameter values, little endian, in table order
//
// kind "hvae" carries a trained model; "identity" and "zero" are the stub
// reconstructors used by tests and dry runs and carry no parameters.
inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ModelKind { hvae, identity, zero };
ModelKind parse_model_kind(const std::string& name);
std::string to_string(ModelKind kind);

struct Checkpoint {
    ModelKind kind = ModelKind::hvae;
    std::string series_id;
    int window = 64;
    StandardizationParams standardization;
    std::optional<HierarchicalVae<float>> model;  // set iff kind == hvae

    std::unique_ptr<Reconstructor> reconstructor(bool sample_posterior = false, std::uint64_t seed = 0) const;
};

void save_checkpoint(const std::filesystem::path& path, const std::string& series_id,
                     const HierarchicalVae<float>& model, const StandardizationParams& standardization);
void save_stub_checkpoint(const std::filesystem::path& path, const std::string& series_id, ModelKind kind,
                          int window, const StandardizationParams& standardization = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Architecture as JSON and as the compact strings used in config files:
// channels "8,16,16,32,32", groups "4:32,3:4,3:2".
std::string arch_to_json(const ArchConfig& arch);
ArchConfig arch_from_json(const std::string& text);
std::string format_int_list(const std::vector<int>& values);
std::vector<int> parse_int_list(const std::string& text);
std::string format_groups(const std::vector<GroupPlacement>& groups);
std::vector<GroupPlacement> parse_groups(const std::string& text);

}  // namespace tsad
