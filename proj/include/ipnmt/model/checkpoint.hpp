#pragma once

#include <filesystem>

#include "ipnmt/model/seq2seq.hpp"
#include "ipnmt/model/vocabulary.hpp"

namespace ipnmt::model {

// A model together with the vocabularies it was trained with.
struct ModelBundle {
  Vocabulary source_vocab;
  Vocabulary target_vocab;
  Seq2Seq network;
};

// Little-endian binary checkpoint:
//
//   magic      "IPNMT\0"                      6 bytes
//   version    u16                            (currently 1)
//   config     u32 length + UTF-8 JSON
//   vocab x2   u32 count, then per token u32 length + UTF-8 bytes
//              (source first; specials included)
//   table      u32 count, then per tensor: u16 name length + name,
//              u32 rank, u64 dims[rank], u64 byte offset into payload
//   payload    u64 byte length, then raw float64 values
//
// Optimizer state is not stored; a loaded model starts with fresh Adam
// moments.
inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path);
// Throws FormatError on bad magic/version, truncation, or a table that does
// not match the config's shapes. Nothing is returned on failure.
ModelBundle load_checkpoint(const std::filesystem::path& path);

std::string serialize_checkpoint(const ModelBundle& bundle);
ModelBundle deserialize_checkpoint(std::string_view bytes);

}  // namespace ipnmt::model
