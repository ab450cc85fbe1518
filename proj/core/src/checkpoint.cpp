#include <bit>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "poseguide/guidance.hpp"

namespace poseguide {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr const char* kCheckpointFormat = "poseguide-checkpoint-v1";

}  // namespace

void save_checkpoint(const GuidancePipeline& pipeline, std::uint64_t seed,
                     const std::filesystem::path& path) {
  nlohmann::json manifest;
  manifest["format"] = kCheckpointFormat;
  manifest["seed"] = seed;
  manifest["variant"] = std::string(variant_name(pipeline.variant()));
  manifest["components"] = nlohmann::json::array();
  for (const nn::ParamStore* store : pipeline.stores()) {
    nlohmann::json comp;
    comp["name"] = store->name();
    comp["params"] = nlohmann::json::array();
    for (const nn::Param* p : store->params()) {
      nlohmann::json entry;
      entry["name"] = p->name;
      entry["shape"] = p->value().shape();
      comp["params"].push_back(std::move(entry));
    }
    manifest["components"].push_back(std::move(comp));
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out << manifest.dump() << "\n";
  std::vector<float> buf;
  for (const nn::ParamStore* store : pipeline.stores())
    for (const nn::Param* p : store->params()) {
      buf.resize(p->value().size());
      for (std::size_t i = 0; i < buf.size(); ++i)
        buf[i] = static_cast<float>(p->value()[i]);
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
  if (!out) throw IoError("short write to checkpoint: " + path.string());
}

std::uint64_t load_checkpoint(GuidancePipeline& pipeline, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());

  std::string header_line;
  if (!std::getline(in, header_line))
    throw FormatError("checkpoint missing manifest line: " + path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint manifest: " + std::string(e.what()));
  }
  if (!manifest.contains("format") || manifest["format"] != kCheckpointFormat)
    throw FormatError("checkpoint format mismatch in " + path.string());

  const auto stores = pipeline.stores();
  const auto& components = manifest["components"];
  if (!components.is_array() || components.size() != stores.size())
    throw FormatError("checkpoint component list does not match this pipeline");

  std::vector<float> buf;
  for (std::size_t s = 0; s < stores.size(); ++s) {
    const auto& comp = components[s];
    if (comp["name"] != stores[s]->name())
      throw FormatError("checkpoint component \"" + comp["name"].get<std::string>() +
                        "\" does not match \"" + stores[s]->name() + "\"");
    const auto params = stores[s]->params();
    const auto& entries = comp["params"];
    if (!entries.is_array() || entries.size() != params.size())
      throw FormatError("checkpoint param list mismatch in component " + stores[s]->name());
    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::vector<int> shape = entries[i]["shape"].get<std::vector<int>>();
      if (shape != params[i]->value().shape() || entries[i]["name"] != params[i]->name)
        throw FormatError("checkpoint param \"" + entries[i]["name"].get<std::string>() +
                          "\" does not match pipeline layout");
      buf.resize(params[i]->value().size());
      in.read(reinterpret_cast<char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
      if (!in) throw IoError("truncated checkpoint payload: " + path.string());
      for (std::size_t j = 0; j < buf.size(); ++j)
        params[i]->value()[j] = static_cast<double>(buf[j]);
    }
  }
  if (manifest.contains("variant"))
    pipeline.set_variant(parse_variant(manifest["variant"].get<std::string>()));
  return manifest.value("seed", std::uint64_t{0});
}

}  // namespace poseguide
