#include "pgs/nn/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace pgs::nn {

namespace {

constexpr char kMagic[] = "PSCKPT1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

template <typename T>
void put_le(std::string& out, T v) {
  static_assert(sizeof(T) == 8);
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  T v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const Tokenizer& tokenizer, std::uint64_t step,
                     const nlohmann::json& meta) {
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t total = 0;
  for (const Parameter& p : model.parameters()) {
    for (double x : p.value.data) {
      if (!std::isfinite(x)) throw std::runtime_error("refusing to save non-finite weight in '" + p.name + "'");
    }
    tensors.push_back({{"name", p.name}, {"rows", p.value.rows}, {"cols", p.value.cols}});
    total += p.value.size();
  }
  const nlohmann::json header{{"format", 1},
                              {"config", model.config().to_json()},
                              {"tensors", std::move(tensors)},
                              {"tokenizer", tokenizer.to_json()},
                              {"tokenizer_hash", tokenizer.hash()},
                              {"step", step},
                              {"meta", meta}};
  const std::string h = header.dump();
  std::string blob(kMagic, kMagicLen);
  put_le<std::uint64_t>(blob, h.size());
  blob += h;
  blob.reserve(blob.size() + total * 8);
  for (const Parameter& p : model.parameters()) {
    for (double x : p.value.data) put_le<double>(blob, x);
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw std::runtime_error("short write on checkpoint '" + path + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot move checkpoint into '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto corrupt = [&](const std::string& why) { return std::runtime_error("checkpoint '" + path + "': " + why); };
  if (blob.size() < kMagicLen + 8 || blob.compare(0, kMagicLen, kMagic) != 0) throw corrupt("bad magic");
  const auto hlen = get_le<std::uint64_t>(blob.data() + kMagicLen);
  if (hlen > blob.size() - kMagicLen - 8) throw corrupt("truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(kMagicLen + 8, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw corrupt(std::string("bad header: ") + e.what());
  }
  Checkpoint ck;
  try {
    if (header.at("format").get<int>() != 1) throw corrupt("unsupported format");
    ck.tokenizer = Tokenizer::from_json(header.at("tokenizer"));
    if (ck.tokenizer.hash() != header.at("tokenizer_hash").get<std::string>()) throw corrupt("tokenizer hash mismatch");
    const ModelConfig config = ModelConfig::from_json(header.at("config"));
    if (config.vocab_size != ck.tokenizer.vocab_size()) throw corrupt("vocabulary size does not match the tokenizer");
    ck.model = Model(config, 0);
    ck.step = header.at("step").get<std::uint64_t>();
    if (header.contains("meta")) ck.meta = header["meta"];
    const auto& tensors = header.at("tensors");
    auto& params = ck.model.parameters();
    if (tensors.size() != params.size()) throw corrupt("tensor count mismatch");
    std::size_t offset = kMagicLen + 8 + hlen;
    for (std::size_t i = 0; i < params.size(); ++i) {
      Parameter& p = params[i];
      if (tensors[i].at("name").get<std::string>() != p.name || tensors[i].at("rows").get<std::size_t>() != p.value.rows ||
          tensors[i].at("cols").get<std::size_t>() != p.value.cols) {
        throw corrupt("tensor '" + p.name + "' has an unexpected name or shape");
      }
      if (blob.size() < offset + p.value.size() * 8) throw corrupt("truncated payload");
      for (double& x : p.value.data) {
        x = get_le<double>(blob.data() + offset);
        offset += 8;
      }
    }
    if (offset != blob.size()) throw corrupt("trailing bytes after payload");
  } catch (const nlohmann::json::exception& e) {
    throw corrupt(std::string("bad header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw corrupt(e.what());
  }
  return ck;
}

}  // namespace pgs::nn
