#include "fgse/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace fgse {

using nlohmann::json;

namespace {

constexpr const char* kVocabFormatTag = "fgse-vocab-v1";

json vocab_to_json(const Vocabulary& v) {
  json j;
  j["format"] = kVocabFormatTag;
  j["relations"] = json::array();
  for (const char* name : kRelationNames) j["relations"].push_back(name);
  j["objects"] = v.objects;
  j["labels"] = v.labels;
  j["heads"] = v.heads;
  return j;
}

Vocabulary vocab_from_json(const json& j) {
  if (!j.contains("format") || j["format"] != kVocabFormatTag) {
    throw ParseError("vocabulary sidecar: missing or unexpected format tag");
  }
  const auto rels = j.at("relations").get<std::vector<std::string>>();
  if (rels.size() != kRelationCount) {
    throw ParseError("vocabulary sidecar: expected 14 relation names");
  }
  for (int i = 0; i < kRelationCount; ++i) {
    if (rels[i] != kRelationNames[i]) {
      throw VocabError("vocabulary sidecar: relation order mismatch at bit " + std::to_string(i) +
                       " (" + rels[i] + " vs " + kRelationNames[i] + ")");
    }
  }
  Vocabulary v;
  v.objects = j.at("objects").get<std::vector<std::string>>();
  v.labels = j.at("labels").get<std::vector<std::string>>();
  v.heads = j.at("heads").get<int>();
  return v;
}

json frame_to_json(const SceneGraph& g, int subject, float fps, std::span<const int> labels) {
  json j;
  j["t"] = g.time_index;
  j["subject"] = subject;
  j["fps"] = fps;
  json nodes = json::array();
  for (const SceneGraphNode& n : g.nodes) {
    nodes.push_back({{"id", n.object_id}, {"cat", n.category}, {"hand", hand_role_name(n.hand)}});
  }
  j["nodes"] = std::move(nodes);
  json edges = json::array();
  for (const SceneGraphEdge& e : g.edges) {
    json rel = json::array();
    for (int b = 0; b < kRelationCount; ++b) rel.push_back(e.rel.bits.test(b) ? 1 : 0);
    edges.push_back({{"src", e.src_id}, {"dst", e.dst_id}, {"rel", std::move(rel)}});
  }
  j["edges"] = std::move(edges);
  j["labels"] = std::vector<int>(labels.begin(), labels.end());
  return j;
}

SceneGraph frame_from_json(const json& j, std::size_t line, int* subject, float* fps,
                           std::vector<int>* labels) {
  SceneGraph g;
  try {
    g.time_index = j.at("t").get<int>();
    *subject = j.at("subject").get<int>();
    *fps = j.at("fps").get<float>();
    for (const json& n : j.at("nodes")) {
      SceneGraphNode node;
      node.object_id = n.at("id").get<int>();
      node.category = n.at("cat").get<int>();
      const auto role = hand_role_from_name(n.at("hand").get<std::string>());
      if (!role) throw ParseError("unknown hand role '" + n.at("hand").get<std::string>() + "'", line);
      node.hand = *role;
      g.nodes.push_back(node);
    }
    for (const json& e : j.at("edges")) {
      SceneGraphEdge edge;
      edge.src_id = e.at("src").get<int>();
      edge.dst_id = e.at("dst").get<int>();
      const auto rel = e.at("rel").get<std::vector<int>>();
      if (rel.size() != kRelationCount) throw ParseError("rel must hold 14 bits", line);
      for (int b = 0; b < kRelationCount; ++b) edge.rel.bits.set(b, rel[b] != 0);
      g.edges.push_back(edge);
    }
    *labels = j.at("labels").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed frame record: ") + e.what(), line);
  }
  return g;
}

HandRole parse_hand_field(const json& j, std::size_t line) {
  if (!j.contains("hand")) return HandRole::none;
  const auto role = hand_role_from_name(j["hand"].get<std::string>());
  if (!role) throw ParseError("unknown hand role '" + j["hand"].get<std::string>() + "'", line);
  return *role;
}

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return j;
}

int lookup_or_add(Vocabulary& vocab, bool fixed, const std::string& name, bool is_label) {
  const int idx = is_label ? vocab.label_index(name) : vocab.object_index(name);
  if (idx >= 0) return idx;
  if (fixed) {
    throw VocabError(std::string(is_label ? "label" : "object category") + " '" + name +
                     "' not in vocabulary");
  }
  return is_label ? vocab.add_label(name) : vocab.add_object(name);
}

EpisodeDataset load_fgse_jsonl(const std::filesystem::path& path) {
  EpisodeDataset ds;
  ds.vocab = vocab_from_json(load_json_file(vocab_sidecar_path(path)));

  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  GraphSequence cur;
  bool have_cur = false;
  int prev_t = 0;

  auto finish = [&]() {
    if (have_cur) ds.sequences.push_back(std::move(cur));
    cur = GraphSequence{};
    have_cur = false;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    int subject = 0;
    float fps = 0.0f;
    std::vector<int> labels;
    SceneGraph g = frame_from_json(j, line_no, &subject, &fps, &labels);
    if (static_cast<int>(labels.size()) != ds.vocab.heads) {
      throw ParseError("expected " + std::to_string(ds.vocab.heads) + " labels per frame",
                       line_no);
    }
    // A new episode begins when t does not increase or the subject changes.
    if (have_cur && (g.time_index <= prev_t || subject != cur.subject)) finish();
    if (!have_cur) {
      have_cur = true;
      cur.subject = subject;
      cur.fps = fps;
      cur.labels.assign(ds.vocab.heads, {});
    }
    prev_t = g.time_index;
    for (int h = 0; h < ds.vocab.heads; ++h) cur.labels[h].push_back(labels[h]);
    cur.graphs.push_back(std::move(g));
  }
  finish();
  ds.validate();
  return ds;
}

EpisodeDataset load_bimacs_json(const std::filesystem::path& path) {
  const json root = load_json_file(path);
  EpisodeDataset ds;
  bool fixed_vocab = false;
  if (std::filesystem::exists(vocab_sidecar_path(path))) {
    ds.vocab = vocab_from_json(load_json_file(vocab_sidecar_path(path)));
    fixed_vocab = true;
  } else {
    ds.vocab.heads = 2;
  }
  const float fps = root.value("fps", 30.0f);
  for (const json& ep : root.at("episodes")) {
    GraphSequence seq;
    seq.subject = ep.at("subject").get<int>();
    seq.fps = fps;
    seq.labels.assign(2, {});
    std::vector<SceneGraphNode> nodes;
    int next_id = 0;
    for (const json& obj : ep.at("objects")) {
      SceneGraphNode n;
      n.object_id = next_id++;
      n.category = lookup_or_add(ds.vocab, fixed_vocab, obj.at("name").get<std::string>(), false);
      n.hand = parse_hand_field(obj, 0);
      nodes.push_back(n);
    }
    int t = 0;
    for (const json& fr : ep.at("frames")) {
      SceneGraph g;
      g.time_index = fr.value("t", t);
      g.nodes = nodes;
      for (const json& e : fr.at("edges")) {
        SceneGraphEdge edge;
        edge.src_id = e.at("src").get<int>();
        edge.dst_id = e.at("dst").get<int>();
        for (const json& rname : e.at("relations")) {
          const int bit = relation_index(rname.get<std::string>());
          if (bit < 0) {
            throw VocabError("unknown relation name '" + rname.get<std::string>() + "'");
          }
          edge.rel.bits.set(bit);
        }
        g.edges.push_back(edge);
      }
      const json& labels = fr.at("labels");
      seq.labels[0].push_back(
          lookup_or_add(ds.vocab, fixed_vocab, labels.at("left").get<std::string>(), true));
      seq.labels[1].push_back(
          lookup_or_add(ds.vocab, fixed_vocab, labels.at("right").get<std::string>(), true));
      seq.graphs.push_back(std::move(g));
      ++t;
    }
    ds.sequences.push_back(std::move(seq));
  }
  ds.validate();
  return ds;
}

EpisodeDataset load_coax_boxes(const std::filesystem::path& path, const RelationThresholds& cfg) {
  const json root = load_json_file(path);
  EpisodeDataset ds;
  ds.vocab.heads = 1;
  bool fixed_vocab = false;
  if (std::filesystem::exists(vocab_sidecar_path(path))) {
    ds.vocab = vocab_from_json(load_json_file(vocab_sidecar_path(path)));
    fixed_vocab = true;
  }
  const float fps = root.value("fps", 30.0f);
  for (const json& ep : root.at("episodes")) {
    GraphSequence seq;
    seq.subject = ep.at("subject").get<int>();
    seq.fps = fps;
    seq.labels.assign(1, {});
    std::vector<ObjectTrack> prev;
    int t = 0;
    for (const json& fr : ep.at("frames")) {
      std::vector<ObjectTrack> tracks;
      for (const json& obj : fr.at("objects")) {
        ObjectTrack tr;
        tr.object_id = obj.at("id").get<int>();
        tr.category =
            lookup_or_add(ds.vocab, fixed_vocab, obj.at("category").get<std::string>(), false);
        const auto box = obj.at("box").get<std::vector<float>>();
        if (box.size() != 6) throw ParseError("box must be [cx, cy, cz, ex, ey, ez]");
        tr.box.center = {box[0], box[1], box[2]};
        tr.box.extent = {box[3], box[4], box[5]};
        tr.hand = parse_hand_field(obj, 0);
        tracks.push_back(tr);
      }
      // Action-object pairs collapse into one class per observed pair.
      const json& lab = fr.at("label");
      const std::string merged =
          lab.at("action").get<std::string>() + " " + lab.at("object").get<std::string>();
      seq.labels[0].push_back(lookup_or_add(ds.vocab, fixed_vocab, merged, true));
      seq.graphs.push_back(build_scene_graph(tracks, prev, cfg, fr.value("t", t)));
      prev = std::move(tracks);
      ++t;
    }
    ds.sequences.push_back(std::move(seq));
  }
  ds.validate();
  return ds;
}

std::uint64_t fnv1a(std::uint64_t h, std::string_view s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

int Vocabulary::object_index(const std::string& name) const {
  const auto it = std::find(objects.begin(), objects.end(), name);
  return it == objects.end() ? -1 : static_cast<int>(it - objects.begin());
}

int Vocabulary::label_index(const std::string& name) const {
  const auto it = std::find(labels.begin(), labels.end(), name);
  return it == labels.end() ? -1 : static_cast<int>(it - labels.begin());
}

int Vocabulary::add_object(const std::string& name) {
  objects.push_back(name);
  return static_cast<int>(objects.size()) - 1;
}

int Vocabulary::add_label(const std::string& name) {
  labels.push_back(name);
  return static_cast<int>(labels.size()) - 1;
}

std::vector<int> EpisodeDataset::subjects() const {
  std::set<int> s;
  for (const GraphSequence& seq : sequences) s.insert(seq.subject);
  return {s.begin(), s.end()};
}

void EpisodeDataset::validate() const {
  const int n_cat = static_cast<int>(vocab.objects.size());
  const int n_lab = static_cast<int>(vocab.labels.size());
  for (const GraphSequence& seq : sequences) {
    if (seq.head_count() != vocab.heads) {
      throw std::invalid_argument("dataset: sequence head count differs from vocabulary");
    }
    for (const auto& stream : seq.labels) {
      if (stream.size() != seq.graphs.size()) {
        throw std::invalid_argument("dataset: label stream length differs from graph count");
      }
      for (int l : stream) {
        if (l < 0 || l >= n_lab) throw std::out_of_range("dataset: label index outside vocabulary");
      }
    }
    int prev_t = -1;
    bool first = true;
    for (const SceneGraph& g : seq.graphs) {
      if (!first && g.time_index <= prev_t) {
        throw std::invalid_argument("dataset: time_index not strictly increasing");
      }
      first = false;
      prev_t = g.time_index;
      validate_scene_graph(g, n_cat);
    }
  }
}

std::uint64_t EpisodeDataset::content_hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  h = fnv1a(h, vocab_to_json(vocab).dump());
  for (const GraphSequence& seq : sequences) {
    for (std::size_t i = 0; i < seq.graphs.size(); ++i) {
      std::vector<int> labels(seq.head_count());
      for (int hd = 0; hd < seq.head_count(); ++hd) labels[hd] = seq.labels[hd][i];
      h = fnv1a(h, frame_to_json(seq.graphs[i], seq.subject, seq.fps, labels).dump());
      h = fnv1a(h, "\n");
    }
  }
  return h;
}

DatasetFormat dataset_format_from_name(const std::string& name) {
  if (name == "fgse-jsonl") return DatasetFormat::fgse_jsonl;
  if (name == "bimacs-json") return DatasetFormat::bimacs_json;
  if (name == "coax-boxes") return DatasetFormat::coax_boxes;
  throw std::invalid_argument("unknown dataset format '" + name +
                              "' (expected fgse-jsonl, bimacs-json or coax-boxes)");
}

const char* dataset_format_name(DatasetFormat fmt) {
  switch (fmt) {
    case DatasetFormat::fgse_jsonl: return "fgse-jsonl";
    case DatasetFormat::bimacs_json: return "bimacs-json";
    case DatasetFormat::coax_boxes: return "coax-boxes";
  }
  return "?";
}

EpisodeDataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                            const RelationThresholds& cfg) {
  if (!std::filesystem::exists(path)) throw ParseError("no such file: " + path.string());
  switch (format) {
    case DatasetFormat::fgse_jsonl: return load_fgse_jsonl(path);
    case DatasetFormat::bimacs_json: return load_bimacs_json(path);
    case DatasetFormat::coax_boxes: return load_coax_boxes(path, cfg);
  }
  throw std::invalid_argument("load_dataset: bad format");
}

void save_dataset(const EpisodeDataset& ds, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const GraphSequence& seq : ds.sequences) {
    for (std::size_t i = 0; i < seq.graphs.size(); ++i) {
      std::vector<int> labels(seq.head_count());
      for (int hd = 0; hd < seq.head_count(); ++hd) labels[hd] = seq.labels[hd][i];
      out << frame_to_json(seq.graphs[i], seq.subject, seq.fps, labels).dump() << "\n";
    }
  }
  std::ofstream vout(vocab_sidecar_path(path));
  if (!vout) throw std::runtime_error("cannot write vocabulary sidecar for " + path.string());
  vout << vocab_to_json(ds.vocab).dump(2) << "\n";
}

std::string scene_graph_to_jsonl(const SceneGraph& g, int subject, float fps,
                                 std::span<const int> labels) {
  return frame_to_json(g, subject, fps, labels).dump();
}

std::filesystem::path vocab_sidecar_path(const std::filesystem::path& dataset_path) {
  std::filesystem::path p = dataset_path;
  p.replace_extension(".vocab.json");
  return p;
}

GraphSequence mirror_graph_sequence(const GraphSequence& s) {
  if (s.head_count() != 2) {
    throw std::invalid_argument("mirror_graph_sequence: dataset is not bimanual");
  }
  GraphSequence out = s;
  std::swap(out.labels[0], out.labels[1]);
  for (SceneGraph& g : out.graphs) {
    for (SceneGraphNode& n : g.nodes) {
      if (n.hand == HandRole::left) n.hand = HandRole::right;
      else if (n.hand == HandRole::right) n.hand = HandRole::left;
    }
    for (SceneGraphEdge& e : g.edges) {
      const bool l = e.rel.test(Relation::left_of);
      const bool r = e.rel.test(Relation::right_of);
      e.rel.set(Relation::left_of, r);
      e.rel.set(Relation::right_of, l);
    }
  }
  return out;
}

GraphSequence downsample(const GraphSequence& s, int factor) {
  if (factor <= 0) throw std::invalid_argument("downsample: factor must be >= 1");
  if (factor == 1) return s;
  GraphSequence out;
  out.subject = s.subject;
  out.fps = s.fps / static_cast<float>(factor);
  out.labels.assign(s.head_count(), {});
  for (int i = 0; i < s.length(); i += factor) {
    out.graphs.push_back(s.graphs[i]);
    for (int h = 0; h < s.head_count(); ++h) out.labels[h].push_back(s.labels[h][i]);
  }
  return out;
}

std::vector<int> upsample_predictions(const std::vector<int>& preds, int factor,
                                      int original_len) {
  if (factor <= 0) throw std::invalid_argument("upsample_predictions: factor must be >= 1");
  const int expected = (original_len + factor - 1) / factor;
  if (expected != static_cast<int>(preds.size())) {
    throw std::invalid_argument("upsample_predictions: got " + std::to_string(preds.size()) +
                                " predictions, expected " + std::to_string(expected));
  }
  std::vector<int> out(original_len);
  for (int i = 0; i < original_len; ++i) out[i] = preds[i / factor];
  return out;
}

}  // namespace fgse
