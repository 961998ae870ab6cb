#pragma once

// Binary checkpoint container:
//   magic "MWNMTCK1", u32 version
//   dims as key/value strings
//   source languages (name, vocab, hidden), target languages (name, vocab)
//   named parameter blocks (name, rank, dims, raw float64 data)
//   named text blocks (per-language vocabulary and merge tables)
//   u32 CRC-32 of everything above
// Integers and floats are stored little-endian.

#include <cstdint>
#include <string>

#include "mwnmt/model.hpp"

namespace mwnmt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_model(const MultiWayModel& model);
// ChecksumError on a corrupt payload, VersionError on an unsupported version.
MultiWayModel deserialize_model(const std::string& bytes);

void save_checkpoint(const MultiWayModel& model, const std::string& path);
MultiWayModel load_checkpoint(const std::string& path);

}  // namespace mwnmt
