#pragma once

#include "tsad/detect.hpp"
#include "tsad/hvae.hpp"
#include "tsad/ingest.hpp"
#include "tsad/train.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace tsad {

enum class LabelFormat { none, index, nasa, nab };
LabelFormat parse_label_format(const std::string& name);
std::string to_string(LabelFormat format);

// Everything a run needs. Serialized as INI with sections data, window,
// train, arch, detect and run; keys are addressed as "section.key".
struct RunConfig {
    // data
    std::filesystem::path data_path;  // a series file or a directory of them
    SeriesFormat format = SeriesFormat::generic_csv;
    std::filesystem::path labels_path;
    LabelFormat label_format = LabelFormat::none;
    // window
    int window = 64;
    int step = 1;
    // train
    TrainConfig train;
    int checkpoint_every = 0;  // epochs; 0 writes only the final checkpoint
    // arch (arch.window always follows window)
    ArchConfig arch;
    // detect
    double theta = 0.1;
    double lambda = 0.95;
    bool sample_posterior = false;
    int detect_batch = 128;
    // run
    std::filesystem::path output = "run";
    std::uint64_t seed = 0;
    ImputePolicy impute = ImputePolicy::linear;

    void validate() const;
    ArchConfig effective_arch() const;
    TrainConfig effective_train() const;
    DetectConfig detect_config() const;
};

// Known keys, in file order.
const std::vector<std::string>& config_keys();

// Applies "section.key" = value pairs on top of `base`. Unknown keys and
// unparsable values raise ConfigError.
RunConfig apply_overrides(RunConfig base, const std::map<std::string, std::string>& values);

RunConfig load_config(const std::filesystem::path& path, const RunConfig& base = {});
void save_config(const std::filesystem::path& path, const RunConfig& cfg);
std::map<std::string, std::string> config_values(const RunConfig& cfg);

}  // namespace tsad
