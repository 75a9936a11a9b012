#include "ocrcap/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "ocrcap/digest.hpp"
#include "ocrcap/error.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace ocrcap {

namespace {

constexpr const char* kMagic = "OCRCAP-CHECKPOINT 1";

nlohmann::json config_json(const ModelConfig& c) {
  return {{"variant", std::string(to_string(c.variant))},
          {"d_model", c.d_model},
          {"d_region", c.d_region},
          {"d_ocr", c.d_ocr},
          {"encoder_layers", c.encoder_layers},
          {"fixed_vocab_size", c.fixed_vocab_size},
          {"extended_vocab_size", c.extended_vocab_size},
          {"init_range", c.init_range},
          {"seed", c.seed},
          {"recurrent_cell", "gru"}};
}

ModelConfig config_from(const nlohmann::json& j) {
  ModelConfig c;
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.d_model = j.at("d_model").get<std::size_t>();
  c.d_region = j.at("d_region").get<std::size_t>();
  c.d_ocr = j.at("d_ocr").get<std::size_t>();
  c.encoder_layers = j.at("encoder_layers").get<std::size_t>();
  c.fixed_vocab_size = j.at("fixed_vocab_size").get<std::size_t>();
  c.extended_vocab_size = j.at("extended_vocab_size").get<std::size_t>();
  c.init_range = j.at("init_range").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config, const ModelParams& params,
                     const ExtendedVocabulary& vocab, std::size_t epoch) {
  nlohmann::json header;
  header["config"] = config_json(config);
  header["vocab_hash"] = hex64(vocab.hash());
  header["epoch"] = epoch;
  nlohmann::json list = nlohmann::json::array();
  const auto named = params.named();
  for (const auto& [name, t] : named) list.push_back({{"name", name}, {"shape", t.shape()}});
  header["params"] = list;

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + path);
    out << kMagic << '\n' << header.dump() << '\n';
    for (const auto& [name, t] : named) {
      const auto v = t.values();
      out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
    if (!out) throw DataError("failed writing checkpoint " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw DataError("cannot move checkpoint into place: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  std::string magic, header_line;
  std::getline(in, magic);
  if (magic != kMagic) throw DataError(path + ": not a checkpoint file");
  std::getline(in, header_line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": bad checkpoint header: " + e.what());
  }
  Checkpoint ck;
  try {
    ck.config = config_from(header.at("config"));
    ck.vocab_hash = std::stoull(header.at("vocab_hash").get<std::string>(), nullptr, 16);
    ck.epoch = header.at("epoch").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": bad checkpoint header: " + e.what());
  }
  ck.config.validate();
  ck.params = ModelParams::initialize(ck.config);
  const auto named = ck.params.named();
  const auto& list = header.at("params");
  if (list.size() != named.size()) {
    throw DataError(path + ": " + std::to_string(list.size()) + " parameters stored, configuration needs " +
                    std::to_string(named.size()));
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& [name, t] = named[i];
    if (list[i].at("name").get<std::string>() != name || list[i].at("shape").get<Shape>() != t.shape()) {
      throw DataError(path + ": parameter " + std::to_string(i) + " does not match " + name + " " +
                      shape_str(t.shape()));
    }
    Tensor handle = t;
    auto v = handle.mutable_values();
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) throw DataError(path + ": truncated at parameter " + name);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(path + ": trailing bytes after parameters");
  return ck;
}

Checkpoint load_checkpoint(const std::string& path, const ExtendedVocabulary& vocab) {
  Checkpoint ck = read_checkpoint(path);
  if (ck.vocab_hash != vocab.hash()) {
    throw DataError(path + ": trained with vocabulary " + hex64(ck.vocab_hash) + " but given " + hex64(vocab.hash()));
  }
  return ck;
}

}  // namespace ocrcap
