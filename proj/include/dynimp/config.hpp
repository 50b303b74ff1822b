#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dynimp/data_model.hpp"
#include "dynimp/dynimp_model.hpp"
#include "dynimp/evaluation.hpp"

namespace dynimp {

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string help;
};

/// Every tunable of the pipeline as a flat key=value map.
///
/// Resolution order, later wins: built-in defaults, config file, DYNIMP_<KEY>
/// environment variables, command-line flags. Unknown keys are rejected at
/// every layer; validate() parses every value and checks module preconditions.
class RunConfig {
public:
    RunConfig();

    static const std::vector<ConfigKey>& keys();
    static bool is_key(const std::string& key);

    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;

    /// Reads `key = value` lines; '#' starts a comment.
    void merge_file(const std::filesystem::path& path);
    void merge_text(const std::string& text, const std::string& origin = "<text>");
    /// Reads the "config" object of a run manifest.
    void merge_manifest(const std::filesystem::path& path);
    void merge_environment();

    const std::map<std::string, std::string>& values() const { return values_; }
    std::string to_text() const;

    void validate() const;

    std::size_t get_size(const std::string& key) const;
    double get_real(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<double> get_reals(const std::string& key) const;
    std::vector<std::uint64_t> get_u64s(const std::string& key) const;
    std::vector<std::string> get_strings(const std::string& key) const;

    DynImpConfig dynimp_config() const;
    ExperimentConfig experiment_config() const;
    SyntheticSpec synthetic_spec() const;
    CsvSchema csv_schema() const;
    ScalingMode scaling_mode() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace dynimp
