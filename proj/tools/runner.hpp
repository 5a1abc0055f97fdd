#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace fav::cli {

// Malformed or inconsistent run configuration; maps to exit status 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum ExitCode : int {
    kExitPass = 0,
    kExitChecksFailed = 1,
    kExitConfig = 2,
    kExitHypothesis = 3,
};

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<int> depth;
    std::optional<int> budget_bits;
    std::optional<std::string> output;
};

// A validated configuration. `resolved` is self-contained: file references are inlined
// and overrides applied, so (resolved, seed) alone re-derives every artifact.
struct RunConfig {
    std::string mode;
    nlohmann::json resolved;
    std::string output;
    int threads = 1;
};

bool is_randomized(const nlohmann::json& config);

// `base_dir` resolves relative file references inside the config.
RunConfig parse_config(const nlohmann::json& j, const std::string& base_dir, const Overrides& o = {});
RunConfig load_config(const std::string& path, const Overrides& o = {});

struct Outcome {
    // Output file name -> bytes. Contains no timing, so equal configs give equal bytes.
    std::map<std::string, std::string> files;
    nlohmann::json checks = nlohmann::json::array();
    bool passed = false;
};

// Runs the pipeline entirely in memory.
Outcome execute(const RunConfig& c);

// Re-runs the mode's verifiers against stored artifacts.
nlohmann::json verify_artifacts(const RunConfig& c, const std::map<std::string, std::string>& files, bool& passed);

// Writes every file plus history.json (config and SHA-256 of each file) under `dir`.
void write_outcome(const std::string& dir, const RunConfig& c, const Outcome& o);

std::string sha256_hex(const std::string& bytes);

struct ReplayResult {
    nlohmann::json report;
    bool passed = false;
};

// Checks stored hashes, re-derives every file from (config, seed) and re-verifies the
// stored grid sets. Throws ConfigError for an unreadable or malformed history.
ReplayResult replay(const std::string& history_path, int threads = 1);

// `kind` is dimension, decay or weights. Reads the grid levels recorded in the history.
std::string export_csv(const std::string& history_path, const std::string& kind, double alpha, std::int64_t m_max);

// Structured diagnostic for an exception escaping a subcommand, with its exit status.
int classify(const std::exception& e, nlohmann::json& diagnostic);

}  // namespace fav::cli
