#include "acp/structure_file.hpp"

#include <fstream>
#include <sstream>

#include "acp/error.hpp"

namespace acp {

std::string serialize_structure(const StructureVector& s, const nlohmann::ordered_json& meta) {
  nlohmann::ordered_json doc;
  doc["arch"] = s.arch_id;
  doc["channels"] = s.channels;
  if (!meta.is_null()) doc["meta"] = meta;
  return doc.dump();
}

StructureDocument parse_structure(std::string_view text) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Format, std::string("structure file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("arch") || !doc["arch"].is_string() || !doc.contains("channels") ||
      !doc["channels"].is_array()) {
    throw Error(ErrorKind::Format, "structure file needs a string 'arch' and an array 'channels'");
  }
  StructureDocument out;
  out.structure.arch_id = doc["arch"].get<std::string>();
  for (const auto& c : doc["channels"]) {
    if (!c.is_number_integer()) throw Error(ErrorKind::Format, "structure channels must be integers");
    out.structure.channels.push_back(c.get<int>());
  }
  if (doc.contains("meta")) out.meta = doc["meta"];
  return out;
}

void write_structure_file(const std::filesystem::path& path, const StructureVector& s,
                          const nlohmann::ordered_json& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out << serialize_structure(s, meta);
  if (!out.flush()) throw Error(ErrorKind::Io, "failed writing '" + path.string() + "'");
}

StructureDocument read_structure_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open structure file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_structure(text.str());
}

}  // namespace acp
