#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "exprsaug/mlp.hpp"
#include "exprsaug/pipeline.hpp"
#include "exprsaug/rf.hpp"

namespace exprsaug::cli {

enum ExitCode : int { ok = 0, usage = 2, data = 3, numeric = 4 };

struct RunConfig {
    pipeline::InputPaths inputs;
    pipeline::PreprocessConfig preprocess;
    bool fold_safe_scaling = false;
    std::string model = "mlp";
    mlp::MlpConfig mlp;
    rf::TwoStageOptions rf{.downsample = true};
    std::uint64_t seed = 0;
    std::filesystem::path out = ".";
    int threads = 0;  // 0: EXPRSAUG_THREADS or the runtime default
};

/// Parses "1000:0.5,250:0.4" into hidden layer specs.
std::vector<mlp::HiddenLayerSpec> parse_hidden(const std::string& text);
std::string format_hidden(const std::vector<mlp::HiddenLayerSpec>& hidden);

/// 64-bit FNV-1a checksum of a file's bytes, as 16 hex digits.
std::string file_checksum(const std::filesystem::path& path);

/// Runs one command line (without the program name) and returns the exit status.
int run(const std::vector<std::string>& args);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace exprsaug::cli
