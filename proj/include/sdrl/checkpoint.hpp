#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdrl/train.hpp"

namespace sdrl::harness {

/// One length-prefixed named record. Parameter and buffer payloads are
/// little-endian 64-bit floats with explicit shapes; random-stream state and
/// tags travel as byte strings.
struct CheckpointRecord {
    std::string name;
    bool is_bytes = false;
    std::vector<std::uint32_t> dims;
    std::vector<double> values;
    std::string bytes;
};

/// File layout: magic "SDRL", little-endian u32 version, u32 record count,
/// then the records.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint_file(const std::string& path,
                           const std::vector<CheckpointRecord>& records);
/// Throws CheckpointError naming the offending record on magic/version
/// mismatch or truncation.
std::vector<CheckpointRecord> read_checkpoint_file(const std::string& path);

struct CheckpointMeta {
    std::string algo;
    std::string variant;
    int episodes_done = 0;
    long total_steps = 0;
    bool has_buffer = false;
};

/// Serializes the trainer: agent parameters and optimizer state, progress
/// counters, every random stream, and (optionally) the replay buffer so
/// that training resumes bit-for-bit.
void save_checkpoint(rl::Trainer& trainer, const std::string& path, bool include_buffer);

/// Restores into a trainer built from the same configuration; shapes are
/// validated against the variant's architecture record by record.
CheckpointMeta load_checkpoint(rl::Trainer& trainer, const std::string& path);

CheckpointMeta peek_checkpoint_meta(const std::string& path);

}  // namespace sdrl::harness
