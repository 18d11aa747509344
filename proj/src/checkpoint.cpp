#include "fgse/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace fgse {

using nlohmann::json;

namespace {

void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64_le(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_f32_le(std::ostream& out, std::span<const float> data) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
  } else {
    for (float f : data) {
      const auto u = std::bit_cast<std::uint32_t>(f);
      unsigned char b[4];
      for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
      out.write(reinterpret_cast<const char*>(b), 4);
    }
  }
}

void read_f32_le(std::istream& in, std::span<float> data) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
  } else {
    for (float& f : data) {
      unsigned char b[4];
      in.read(reinterpret_cast<char*>(b), 4);
      std::uint32_t u = 0;
      for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(b[i]) << (8 * i);
      f = std::bit_cast<float>(u);
    }
  }
}

json config_to_json(const FgseConfig& c) {
  return json{{"n_graph_layers", c.n_graph_layers},
              {"d_model", c.d_model},
              {"n_heads", c.n_heads},
              {"n_seq_layers", c.n_seq_layers},
              {"window", c.window},
              {"n_classes", c.n_classes},
              {"n_heads_out", c.n_heads_out},
              {"n_categories", c.n_categories},
              {"pooling", pooling_mode_name(c.pooling)},
              {"output", output_mode_name(c.output)},
              {"ff_mult", c.ff_mult}};
}

FgseConfig config_from_json(const json& j) {
  FgseConfig c;
  c.n_graph_layers = j.at("n_graph_layers").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.n_seq_layers = j.at("n_seq_layers").get<int>();
  c.window = j.at("window").get<int>();
  c.n_classes = j.at("n_classes").get<int>();
  c.n_heads_out = j.at("n_heads_out").get<int>();
  c.n_categories = j.at("n_categories").get<int>();
  c.pooling = pooling_mode_from_name(j.at("pooling").get<std::string>());
  c.output = output_mode_from_name(j.at("output").get<std::string>());
  c.ff_mult = j.at("ff_mult").get<int>();
  return c;
}

}  // namespace

void save_checkpoint(const FgseModel& model, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());

  json header;
  header["format"] = kCheckpointTag;
  header["config"] = config_to_json(model.config());
  header["vocab"] = {{"objects", model.vocabulary().objects},
                     {"labels", model.vocabulary().labels},
                     {"heads", model.vocabulary().heads}};
  json params = json::array();
  for (const auto& [name, t] : model.named_parameters()) {
    params.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
  }
  header["params"] = std::move(params);

  const std::string hs = header.dump();
  out << kCheckpointTag << "\n";
  write_u64_le(out, hs.size());
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : model.named_parameters()) write_f32_le(out, t.values());
  if (!out) throw std::runtime_error("short write to " + path.string());
}

FgseModel load_checkpoint(const std::filesystem::path& path, unsigned seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string tag;
  std::getline(in, tag);
  if (tag != kCheckpointTag) {
    throw std::runtime_error(path.string() + ": not a " + std::string(kCheckpointTag) +
                             " checkpoint");
  }
  const std::uint64_t hlen = read_u64_le(in);
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw std::runtime_error(path.string() + ": truncated header");
  const json header = json::parse(hs);

  const FgseConfig cfg = config_from_json(header.at("config"));
  Vocabulary vocab;
  vocab.objects = header.at("vocab").at("objects").get<std::vector<std::string>>();
  vocab.labels = header.at("vocab").at("labels").get<std::vector<std::string>>();
  vocab.heads = header.at("vocab").at("heads").get<int>();

  FgseModel model(cfg, vocab, seed);
  const json& params = header.at("params");
  const auto& named = model.named_parameters();
  if (params.size() != named.size()) {
    throw std::runtime_error(path.string() + ": parameter table does not match the config");
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    const auto& [name, t] = named[i];
    if (params[i].at("name") != name || params[i].at("rows") != t.rows() ||
        params[i].at("cols") != t.cols()) {
      throw std::runtime_error(path.string() + ": parameter '" + name +
                               "' does not match the config");
    }
    Tensor tensor = t;
    read_f32_le(in, tensor.values());
  }
  if (!in) throw std::runtime_error(path.string() + ": truncated payload");
  return model;
}

}  // namespace fgse
