#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "dynimp/data_model.hpp"
#include "dynimp/dynimp_model.hpp"

// Text containers with a format/version first line. Reals are written as
// hexadecimal floating point so every file round-trips bit-exactly; missing
// cells are written as '.'.

namespace dynimp {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr int kCheckpointFormatVersion = 1;

std::string format_hex(double v);
double parse_hex(const std::string& token);

void write_dataset(std::ostream& os, const Dataset& dataset);
Dataset read_dataset(std::istream& is);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

/// Model weights, optimizer state, hyperparameters, seed, and the scaling the
/// training data went through.
struct Checkpoint {
    DynImpModel model;
    ScalingParams scaling;
};

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dynimp
