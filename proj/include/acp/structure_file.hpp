#pragma once

// StructureVector documents: {"arch": ..., "channels": [...], "meta": {...}}
// serialized compactly in that key order with no trailing whitespace.

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "acp/structmodel.hpp"

namespace acp {

struct StructureDocument {
  StructureVector structure;
  nlohmann::ordered_json meta;  // null when absent
};

std::string serialize_structure(const StructureVector& s,
                                const nlohmann::ordered_json& meta = nullptr);

/// Throws Format on malformed text.
StructureDocument parse_structure(std::string_view text);

void write_structure_file(const std::filesystem::path& path, const StructureVector& s,
                          const nlohmann::ordered_json& meta = nullptr);

/// Throws Io when unreadable, Format when malformed.
StructureDocument read_structure_file(const std::filesystem::path& path);

}  // namespace acp
