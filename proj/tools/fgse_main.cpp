#include <CLI11.hpp>
#include <json.hpp>

#include <sys/socket.h>
#include <sys/un.h>
#include <netinet/in.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fgse/checkpoint.hpp"
#include "fgse/dataset.hpp"
#include "fgse/manifest.hpp"
#include "fgse/model.hpp"
#include "fgse/stream.hpp"
#include "fgse/synth.hpp"
#include "fgse/train.hpp"

using namespace fgse;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Run configuration: JSON file merged with command-line flags. Every key is
// declared here; unknown keys are rejected so typos cannot silently fall
// back to defaults.
// ---------------------------------------------------------------------------

struct RunConfig {
  FgseConfig model;
  RelationThresholds thresholds;
  TrainConfig train;
  InferConfig infer;
  bool provisional = false;

  static json schema() {
    return json{
        {"model",
         {{"d_model", 64},
          {"n_heads", 4},
          {"n_graph_layers", 2},
          {"n_seq_layers", 2},
          {"window", 30},
          {"ff_mult", 4},
          {"pooling", "hand"},
          {"output_mode", "frame"}}},
        {"thresholds",
         {{"contact_tolerance", 0.02},
          {"motion_epsilon", 0.01},
          {"containment_ratio", 0.9},
          {"max_edge_distance", 1.5},
          {"vertical_gap_max", 0.5},
          {"lateral_gap_max", 0.5}}},
        {"train",
         {{"epochs", 30},
          {"batch_size", 32},
          {"lr", 1e-3},
          {"beta1", 0.9},
          {"beta2", 0.999},
          {"eps", 1e-8},
          {"stride", 0},
          {"mirror", true},
          {"downsample", 3},
          {"seed", 0}}},
        {"infer", {{"downsample", 3}, {"stride", 1}, {"provisional", false}}}};
  }
};

void reject_unknown_keys(const json& given, const json& allowed, const std::string& prefix) {
  for (const auto& [key, value] : given.items()) {
    if (!allowed.contains(key)) {
      throw std::invalid_argument("config: unknown key '" + prefix + key + "'");
    }
    if (allowed[key].is_object()) {
      if (!value.is_object()) {
        throw std::invalid_argument("config: '" + prefix + key + "' must be an object");
      }
      reject_unknown_keys(value, allowed[key], prefix + key + ".");
    }
  }
}

RunConfig load_run_config(const std::string& path) {
  json merged = RunConfig::schema();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    json file;
    in >> file;
    reject_unknown_keys(file, merged, "");
    merged.merge_patch(file);
  }
  RunConfig rc;
  const json& m = merged["model"];
  rc.model.d_model = m["d_model"];
  rc.model.n_heads = m["n_heads"];
  rc.model.n_graph_layers = m["n_graph_layers"];
  rc.model.n_seq_layers = m["n_seq_layers"];
  rc.model.window = m["window"];
  rc.model.ff_mult = m["ff_mult"];
  rc.model.pooling = pooling_mode_from_name(m["pooling"]);
  rc.model.output = output_mode_from_name(m["output_mode"]);
  const json& t = merged["thresholds"];
  rc.thresholds.contact_tolerance = t["contact_tolerance"];
  rc.thresholds.motion_epsilon = t["motion_epsilon"];
  rc.thresholds.containment_ratio = t["containment_ratio"];
  rc.thresholds.max_edge_distance = t["max_edge_distance"];
  rc.thresholds.vertical_gap_max = t["vertical_gap_max"];
  rc.thresholds.lateral_gap_max = t["lateral_gap_max"];
  const json& tr = merged["train"];
  rc.train.epochs = tr["epochs"];
  rc.train.batch_size = tr["batch_size"];
  rc.train.adam.lr = tr["lr"];
  rc.train.adam.beta1 = tr["beta1"];
  rc.train.adam.beta2 = tr["beta2"];
  rc.train.adam.eps = tr["eps"];
  rc.train.stride = tr["stride"];
  rc.train.mirror = tr["mirror"];
  rc.train.downsample = tr["downsample"];
  rc.train.seed = tr["seed"];
  const json& inf = merged["infer"];
  rc.infer.downsample = inf["downsample"];
  rc.infer.stride = inf["stride"];
  rc.provisional = inf["provisional"];
  return rc;
}

json run_config_to_json(const RunConfig& rc) {
  json j = RunConfig::schema();
  j["model"]["d_model"] = rc.model.d_model;
  j["model"]["n_heads"] = rc.model.n_heads;
  j["model"]["n_graph_layers"] = rc.model.n_graph_layers;
  j["model"]["n_seq_layers"] = rc.model.n_seq_layers;
  j["model"]["window"] = rc.model.window;
  j["model"]["ff_mult"] = rc.model.ff_mult;
  j["model"]["pooling"] = pooling_mode_name(rc.model.pooling);
  j["model"]["output_mode"] = output_mode_name(rc.model.output);
  j["thresholds"]["contact_tolerance"] = rc.thresholds.contact_tolerance;
  j["thresholds"]["motion_epsilon"] = rc.thresholds.motion_epsilon;
  j["thresholds"]["containment_ratio"] = rc.thresholds.containment_ratio;
  j["thresholds"]["max_edge_distance"] = rc.thresholds.max_edge_distance;
  j["thresholds"]["vertical_gap_max"] = rc.thresholds.vertical_gap_max;
  j["thresholds"]["lateral_gap_max"] = rc.thresholds.lateral_gap_max;
  j["train"]["epochs"] = rc.train.epochs;
  j["train"]["batch_size"] = rc.train.batch_size;
  j["train"]["lr"] = rc.train.adam.lr;
  j["train"]["beta1"] = rc.train.adam.beta1;
  j["train"]["beta2"] = rc.train.adam.beta2;
  j["train"]["eps"] = rc.train.adam.eps;
  j["train"]["stride"] = rc.train.stride;
  j["train"]["mirror"] = rc.train.mirror;
  j["train"]["downsample"] = rc.train.downsample;
  j["train"]["seed"] = rc.train.seed;
  j["infer"]["downsample"] = rc.infer.downsample;
  j["infer"]["stride"] = rc.infer.stride;
  j["infer"]["provisional"] = rc.provisional;
  return j;
}

// Flags shared by the model/inference subcommands; only flags the user
// actually passed override the config file.
struct CommonFlags {
  std::string config_path;
  int window = 0;
  int downsample = -1;
  unsigned seed = 0;
  bool seed_set = false;
  std::string pooling;
  std::string output_mode;
  int stride = 0;
  bool provisional = false;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f, RunConfig& rc) {
  cmd->add_option("--config", f.config_path, "JSON configuration file");
  cmd->add_option("-W,--window", f.window, "window length");
  cmd->add_option("-D,--downsample", f.downsample, "temporal downsampling factor");
  cmd->add_option("--seed", f.seed, "random seed")->each([&f](const std::string&) {
    f.seed_set = true;
  });
  cmd->add_option("--pooling", f.pooling, "graph readout: hand | mean")
      ->check(CLI::IsMember({"hand", "mean"}));
  cmd->add_option("--output-mode", f.output_mode, "head output: frame | single | center")
      ->check(CLI::IsMember({"frame", "single", "center"}));
  cmd->add_option("--stride", f.stride, "window stride");
  cmd->add_flag("--provisional", f.provisional, "emit provisional labels while voting");
  cmd->parse_complete_callback([&f, &rc]() {
    rc = load_run_config(f.config_path);
    if (f.window > 0) rc.model.window = f.window;
    if (f.downsample >= 1) {
      rc.train.downsample = f.downsample;
      rc.infer.downsample = f.downsample;
    }
    if (f.seed_set) rc.train.seed = f.seed;
    if (!f.pooling.empty()) rc.model.pooling = pooling_mode_from_name(f.pooling);
    if (!f.output_mode.empty()) rc.model.output = output_mode_from_name(f.output_mode);
    if (f.stride > 0) {
      rc.train.stride = f.stride;
      rc.infer.stride = f.stride;
    }
    if (f.provisional) rc.provisional = true;
  });
}

EpisodeDataset load_data(const std::string& path, const std::string& format,
                         const RelationThresholds& thresholds) {
  return load_dataset(path, dataset_format_from_name(format), thresholds);
}

void check_vocab_match(const Vocabulary& data, const Vocabulary& ckpt) {
  if (data.objects != ckpt.objects || data.labels != ckpt.labels || data.heads != ckpt.heads) {
    throw std::runtime_error("vocabulary mismatch with checkpoint");
  }
}

json prediction_lines(const FinalPrediction& p) {
  json lines = json::array();
  for (std::size_t h = 0; h < p.labels.size(); ++h) {
    lines.push_back({{"t", p.time_index},
                     {"head", static_cast<int>(h)},
                     {"label", p.labels[h]},
                     {"votes", p.vote_counts[h]},
                     {"delay_frames", p.latency_frames}});
  }
  return lines;
}

// Line sources for the stream subcommand: file/stdin, TCP or unix socket.
class LineSource {
 public:
  virtual ~LineSource() = default;
  virtual bool next(std::string& line) = 0;
};

class IstreamSource : public LineSource {
 public:
  explicit IstreamSource(std::istream& in) : in_(in) {}
  bool next(std::string& line) override { return static_cast<bool>(std::getline(in_, line)); }

 private:
  std::istream& in_;
};

class FdSource : public LineSource {
 public:
  FdSource(int listen_fd, int fd) : listen_fd_(listen_fd), fd_(fd) {}
  ~FdSource() override {
    if (fd_ >= 0) ::close(fd_);
    if (listen_fd_ >= 0) ::close(listen_fd_);
  }
  bool next(std::string& line) override {
    line.clear();
    char c;
    while (true) {
      const ssize_t n = ::read(fd_, &c, 1);
      if (n <= 0) return !line.empty();
      if (c == '\n') return true;
      line.push_back(c);
    }
  }

 private:
  int listen_fd_;
  int fd_;
};

std::unique_ptr<LineSource> open_tcp_source(int port) {
  const int listen_fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd < 0) throw std::runtime_error("socket() failed");
  const int one = 1;
  ::setsockopt(listen_fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<uint16_t>(port));
  if (::bind(listen_fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(listen_fd);
    throw std::runtime_error("cannot bind TCP port " + std::to_string(port));
  }
  if (::listen(listen_fd, 1) != 0) {
    ::close(listen_fd);
    throw std::runtime_error("listen() failed");
  }
  std::cerr << "listening on 127.0.0.1:" << port << "\n";
  const int fd = ::accept(listen_fd, nullptr, nullptr);
  if (fd < 0) {
    ::close(listen_fd);
    throw std::runtime_error("accept() failed");
  }
  return std::make_unique<FdSource>(listen_fd, fd);
}

std::unique_ptr<LineSource> open_unix_source(const std::string& path) {
  const int listen_fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
  if (listen_fd < 0) throw std::runtime_error("socket() failed");
  ::unlink(path.c_str());
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  std::snprintf(addr.sun_path, sizeof(addr.sun_path), "%s", path.c_str());
  if (::bind(listen_fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(listen_fd);
    throw std::runtime_error("cannot bind unix socket " + path);
  }
  if (::listen(listen_fd, 1) != 0) {
    ::close(listen_fd);
    throw std::runtime_error("listen() failed");
  }
  std::cerr << "listening on " << path << "\n";
  const int fd = ::accept(listen_fd, nullptr, nullptr);
  if (fd < 0) {
    ::close(listen_fd);
    throw std::runtime_error("accept() failed");
  }
  return std::make_unique<FdSource>(listen_fd, fd);
}

/// One jsonl frame line -> SceneGraph (labels optional on live streams).
SceneGraph parse_stream_line(const std::string& line, std::size_t line_no, float* fps) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
  }
  SceneGraph g;
  g.time_index = j.at("t").get<int>();
  if (j.contains("fps")) *fps = j["fps"].get<float>();
  for (const json& n : j.at("nodes")) {
    SceneGraphNode node;
    node.object_id = n.at("id").get<int>();
    node.category = n.at("cat").get<int>();
    const auto role = hand_role_from_name(n.at("hand").get<std::string>());
    if (!role) throw ParseError("unknown hand role", line_no);
    node.hand = *role;
    g.nodes.push_back(node);
  }
  for (const json& e : j.at("edges")) {
    SceneGraphEdge edge;
    edge.src_id = e.at("src").get<int>();
    edge.dst_id = e.at("dst").get<int>();
    const auto rel = e.at("rel").get<std::vector<int>>();
    if (rel.size() != kRelationCount) throw ParseError("rel must hold 14 bits", line_no);
    for (int b = 0; b < kRelationCount; ++b) edge.rel.bits.set(b, rel[b] != 0);
    g.edges.push_back(edge);
  }
  return g;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  if (out.empty()) throw CLI::ValidationError("expected a comma-separated integer list");
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& rc, const std::string& out, int subjects, int episodes,
              unsigned seed, const std::string& profile_name, double noise_override) {
  SuiteProfile profile = suite_profile(profile_name);
  if (noise_override >= 0.0) profile.noise_sigma = static_cast<float>(noise_override);
  const EpisodeDataset ds =
      generate_benchmark_suite(subjects, episodes, seed, profile, rc.thresholds);
  save_dataset(ds, out);
  const fs::path dir = fs::path(out).has_parent_path() ? fs::path(out).parent_path() : ".";
  json cfg = run_config_to_json(rc);
  cfg["synth"] = {{"subjects", subjects},
                  {"episodes", episodes},
                  {"profile", profile_name},
                  {"noise_sigma", profile.noise_sigma}};
  write_manifest(dir, "synth", cfg, seed, ds.content_hash());
  long frames = 0;
  for (const auto& s : ds.sequences) frames += s.length();
  std::cout << "wrote " << ds.sequences.size() << " episodes (" << frames << " frames, "
            << ds.subjects().size() << " subjects) to " << out << "\n";
  return 0;
}

int cmd_convert(const RunConfig& rc, const std::string& input, const std::string& format,
                const std::string& out) {
  const EpisodeDataset ds = load_data(input, format, rc.thresholds);
  save_dataset(ds, out);
  const fs::path dir = fs::path(out).has_parent_path() ? fs::path(out).parent_path() : ".";
  write_manifest(dir, "convert", run_config_to_json(rc), 0, ds.content_hash());
  std::cout << "episodes: " << ds.sequences.size() << "\n";
  std::cout << "objects (" << ds.vocab.objects.size() << "):";
  for (const auto& o : ds.vocab.objects) std::cout << " " << o;
  std::cout << "\nclasses (" << ds.vocab.labels.size() << "):";
  for (const auto& l : ds.vocab.labels) std::cout << " [" << l << "]";
  std::cout << "\n";
  return 0;
}

int cmd_train(const RunConfig& rc, const std::string& data, const std::string& format,
              const std::string& out, int fold_arg) {
  const EpisodeDataset ds = load_data(data, format, rc.thresholds);
  const std::vector<Fold> folds = make_folds(ds);
  const fs::path out_dir(out.empty() ? "." : out);
  fs::create_directories(out_dir);

  json metrics = json::array();
  if (fold_arg >= 0) {
    if (fold_arg >= static_cast<int>(folds.size())) {
      throw std::runtime_error("fold " + std::to_string(fold_arg) + " outside 0.." +
                               std::to_string(folds.size() - 1));
    }
    TrainRun run;
    const FgseModel model = train(ds, folds[fold_arg], rc.model, rc.train, &run);
    const fs::path ckpt = out_dir / ("fgse-fold" + std::to_string(fold_arg) + ".ckpt");
    save_checkpoint(model, ckpt);
    run.checkpoint_path = ckpt.string();
    std::vector<GraphSequence> test;
    for (int i : folds[fold_arg].test_indices) test.push_back(ds.sequences[i]);
    const EvalResult ev = evaluate(std::make_shared<FgseWindowModel>(model), test, rc.infer,
                                   static_cast<int>(ds.vocab.labels.size()));
    metrics.push_back({{"fold", fold_arg},
                       {"test_subject", run.fold_test_subject},
                       {"f1_macro", ev.f1_macro},
                       {"f1_micro", ev.f1_micro},
                       {"final_loss", run.epoch_loss.back()},
                       {"checkpoint", ckpt.string()}});
    std::cout << "fold " << fold_arg << " subject " << run.fold_test_subject
              << "  f1_macro=" << ev.f1_macro << " f1_micro=" << ev.f1_micro << "\n";
  } else {
    const auto outcomes = run_loso(ds, rc.model, rc.train, rc.infer, env_thread_cap());
    double mean_macro = 0.0, mean_micro = 0.0;
    for (std::size_t fi = 0; fi < outcomes.size(); ++fi) {
      const FoldOutcome& o = outcomes[fi];
      const fs::path ckpt = out_dir / ("fgse-fold" + std::to_string(fi) + ".ckpt");
      save_checkpoint(*o.model, ckpt);
      metrics.push_back({{"fold", static_cast<int>(fi)},
                         {"test_subject", o.test_subject},
                         {"f1_macro", o.eval.f1_macro},
                         {"f1_micro", o.eval.f1_micro},
                         {"final_loss", o.run.epoch_loss.back()},
                         {"checkpoint", ckpt.string()}});
      mean_macro += o.eval.f1_macro / outcomes.size();
      mean_micro += o.eval.f1_micro / outcomes.size();
      std::cout << "fold " << fi << " subject " << o.test_subject
                << "  f1_macro=" << o.eval.f1_macro << " f1_micro=" << o.eval.f1_micro << "\n";
    }
    std::cout << "mean  f1_macro=" << mean_macro << " f1_micro=" << mean_micro << "\n";
  }

  std::ofstream mj(out_dir / "metrics.json");
  mj << metrics.dump(2) << "\n";
  std::ofstream mc(out_dir / "metrics.csv");
  mc << "fold,test_subject,f1_macro,f1_micro,final_loss\n";
  for (const auto& row : metrics) {
    mc << row["fold"] << "," << row["test_subject"] << "," << row["f1_macro"] << ","
       << row["f1_micro"] << "," << row["final_loss"] << "\n";
  }
  write_manifest(out_dir, "train", run_config_to_json(rc), rc.train.seed, ds.content_hash());
  return 0;
}

int cmd_eval(const RunConfig& rc, bool output_mode_override, const std::string& ckpt_path,
             const std::string& data, const std::string& format, int fold_arg,
             const std::string& out) {
  FgseModel model = load_checkpoint(ckpt_path);
  if (output_mode_override && model.config().output != rc.model.output) {
    // frame and center share weights; single reuses them on the pooled mean.
    FgseConfig cfg = model.config();
    cfg.output = rc.model.output;
    FgseModel remodeled(cfg, model.vocabulary(), 0);
    for (std::size_t i = 0; i < model.named_parameters().size(); ++i) {
      const auto src = model.named_parameters()[i].second.values();
      Tensor dst = remodeled.named_parameters()[i].second;  // shared storage
      std::copy(src.begin(), src.end(), dst.values().begin());
    }
    model = std::move(remodeled);
  }
  const EpisodeDataset ds = load_data(data, format, rc.thresholds);
  check_vocab_match(ds.vocab, model.vocabulary());

  std::vector<GraphSequence> episodes;
  if (fold_arg >= 0) {
    const std::vector<Fold> folds = make_folds(ds);
    if (fold_arg >= static_cast<int>(folds.size())) {
      throw std::runtime_error("fold " + std::to_string(fold_arg) + " outside 0.." +
                               std::to_string(folds.size() - 1));
    }
    for (int i : folds[fold_arg].test_indices) episodes.push_back(ds.sequences[i]);
  } else {
    episodes = ds.sequences;
  }
  const EvalResult ev = evaluate(std::make_shared<FgseWindowModel>(model), episodes, rc.infer,
                                 static_cast<int>(ds.vocab.labels.size()));
  json result{{"f1_macro", ev.f1_macro},
              {"f1_micro", ev.f1_micro},
              {"frames", ev.frames},
              {"output_mode", output_mode_name(model.config().output)},
              {"downsample", rc.infer.downsample}};
  std::cout << result.dump() << "\n";
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream f(fs::path(out) / "eval.json");
    f << result.dump(2) << "\n";
    write_manifest(out, "eval", run_config_to_json(rc), rc.train.seed, ds.content_hash());
  }
  return 0;
}

int cmd_stream(const RunConfig& rc, const std::string& ckpt_path, const std::string& input,
               int listen_port, const std::string& unix_path) {
  const FgseModel model = load_checkpoint(ckpt_path);
  auto wm = std::make_shared<FgseWindowModel>(model);
  StreamEngine engine(wm, rc.infer.stride);

  std::ifstream file;
  std::unique_ptr<LineSource> source;
  if (listen_port > 0) {
    source = open_tcp_source(listen_port);
  } else if (!unix_path.empty()) {
    source = open_unix_source(unix_path);
  } else if (input.empty() || input == "-") {
    source = std::make_unique<IstreamSource>(std::cin);
  } else {
    file.open(input);
    if (!file) throw std::runtime_error("cannot open " + input);
    // A sidecar next to a file input must agree with the checkpoint.
    const fs::path sidecar = vocab_sidecar_path(input);
    if (fs::exists(sidecar)) {
      const EpisodeDataset probe = load_dataset(input, DatasetFormat::fgse_jsonl, rc.thresholds);
      check_vocab_match(probe.vocab, model.vocabulary());
    }
    source = std::make_unique<IstreamSource>(file);
  }

  auto emit = [&](const std::vector<FinalPrediction>& preds, bool provisional) {
    for (const FinalPrediction& p : preds) {
      for (json& line : prediction_lines(p)) {
        if (provisional) line["provisional"] = true;
        std::cout << line.dump() << "\n";
      }
    }
    std::cout.flush();  // a line is flushed before the next frame is read
  };

  std::string line;
  std::size_t line_no = 0;
  long kept = 0;
  float fps = 0.0f;
  const int d = std::max(1, rc.infer.downsample);
  while (source->next(line)) {
    ++line_no;
    if (line.empty()) continue;
    const SceneGraph g = parse_stream_line(line, line_no, &fps);
    for (const SceneGraphNode& n : g.nodes) {
      if (n.category < 0 || n.category >= model.config().n_categories) {
        throw std::runtime_error("vocabulary mismatch with checkpoint (category " +
                                 std::to_string(n.category) + " at line " +
                                 std::to_string(line_no) + ")");
      }
    }
    if (line_no % d != 1 && d > 1) continue;  // reduced-rate consumption
    ++kept;
    if (fps > 0.0f) engine.set_fps(fps / static_cast<float>(d));
    emit(engine.push_frame(g), false);
    if (rc.provisional) {
      const auto pending = engine.provisional();
      if (!pending.empty()) emit({pending.front()}, true);
    }
  }
  emit(engine.flush(), false);
  return 0;
}

int cmd_bench(const RunConfig& rc, const std::string& ckpt_path, const std::string& data,
              const std::string& format, long frame_limit) {
  const FgseModel model = load_checkpoint(ckpt_path);
  auto wm = std::make_shared<FgseWindowModel>(model);
  StreamEngine engine(wm, rc.infer.stride);
  const EpisodeDataset ds = load_data(data, format, rc.thresholds);
  check_vocab_match(ds.vocab, model.vocabulary());

  long pushed = 0;
  float fps = 0.0f;
  const auto t0 = std::chrono::steady_clock::now();
  for (const GraphSequence& seq : ds.sequences) {
    const GraphSequence reduced = downsample(seq, rc.infer.downsample);
    fps = reduced.fps;
    engine.set_fps(fps);
    for (const SceneGraph& g : reduced.graphs) {
      engine.push_frame(g);
      if (++pushed >= frame_limit) break;
    }
    engine.flush();
    engine.set_fps(fps);
    if (pushed >= frame_limit) break;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto rep = engine.latency_report();
  json out{{"graphs_per_second", pushed / seconds},
           {"frames", pushed},
           {"window", model.config().window},
           {"fps", fps},
           {"structural_delay_s", rep.structural_delay_s},
           {"mean_push_s", rep.mean_push_s},
           {"max_push_s", rep.max_push_s}};
  std::cout << out.dump() << "\n";
  std::cout << "throughput: " << (pushed / seconds) << " graphs/second; structural delay W/fps = "
            << model.config().window << "/" << fps << " = " << rep.structural_delay_s << " s\n";
  return 0;
}

int cmd_scaling(const RunConfig& rc, const std::string& data, const std::string& format,
                const std::string& windows_text, int n_seeds, int fold_index,
                const std::string& out_csv) {
  const EpisodeDataset ds = load_data(data, format, rc.thresholds);
  const std::vector<int> windows = parse_int_list(windows_text);
  std::vector<unsigned> seeds;
  for (int s = 0; s < n_seeds; ++s) seeds.push_back(rc.train.seed + static_cast<unsigned>(s));
  const auto rows = window_scaling_experiment(ds, windows, seeds, rc.model, rc.train, rc.infer,
                                              fold_index, env_thread_cap());
  std::ostringstream csv;
  csv << "window";
  for (std::size_t s = 0; s < seeds.size(); ++s) csv << ",seed" << seeds[s];
  csv << ",mean_f1_macro\n";
  for (const ScalingRow& r : rows) {
    csv << r.window;
    for (double v : r.per_seed_macro) csv << "," << v;
    csv << "," << r.mean_macro << "\n";
  }
  std::cout << csv.str();
  if (!out_csv.empty()) {
    const fs::path p(out_csv);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p);
    f << csv.str();
    write_manifest(p.has_parent_path() ? p.parent_path() : ".", "scaling",
                   run_config_to_json(rc), rc.train.seed, ds.content_hash());
  }
  return 0;
}

int cmd_params(const RunConfig& rc, int categories, int classes, int heads_out) {
  FgseConfig cfg = rc.model;
  cfg.n_categories = categories;
  cfg.n_classes = classes;
  cfg.n_heads_out = heads_out;
  std::cout << "configuration: d_model=" << cfg.d_model << " heads=" << cfg.n_heads
            << " graph_layers=" << cfg.n_graph_layers << " seq_layers=" << cfg.n_seq_layers
            << " W=" << cfg.window << " pooling=" << pooling_mode_name(cfg.pooling)
            << " categories=" << categories << " classes=" << classes
            << " label_heads=" << heads_out << "\n";
  std::cout << "learned parameters: " << count_params(cfg) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fgse: streaming manipulation-action recognition on semantic scene graphs"};
  app.require_subcommand(1);

  RunConfig rc;
  CommonFlags flags;

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark dataset");
  std::string synth_out = "synth.jsonl";
  int synth_subjects = 5, synth_episodes = 10;
  unsigned synth_seed = 7;
  std::string synth_profile = "default";
  double synth_noise = -1.0;
  synth->add_option("--out", synth_out, "output fgse-jsonl path");
  synth->add_option("--subjects", synth_subjects, "number of subjects")->check(CLI::Range(2, 100));
  synth->add_option("--episodes", synth_episodes, "episodes per subject");
  synth->add_option("--profile", synth_profile, "default | long | hard")
      ->check(CLI::IsMember({"default", "long", "hard"}));
  synth->add_option("--noise", synth_noise, "override jitter sigma (meters)");
  add_common_flags(synth, flags, rc);

  // convert
  auto* convert = app.add_subcommand("convert", "convert a dataset to the native format");
  std::string conv_in, conv_fmt, conv_out = "converted.jsonl";
  convert->add_option("--input", conv_in, "input path")->required();
  convert->add_option("--format", conv_fmt, "fgse-jsonl | bimacs-json | coax-boxes")
      ->required()
      ->check(CLI::IsMember({"fgse-jsonl", "bimacs-json", "coax-boxes"}));
  convert->add_option("--out", conv_out, "output fgse-jsonl path");
  add_common_flags(convert, flags, rc);

  // train
  auto* train_cmd = app.add_subcommand("train", "train models over LOSO folds");
  std::string train_data, train_fmt = "fgse-jsonl", train_out = "run";
  int train_fold = -1;
  train_cmd->add_option("--data", train_data, "dataset path")->required();
  train_cmd->add_option("--format", train_fmt, "dataset format")
      ->check(CLI::IsMember({"fgse-jsonl", "bimacs-json", "coax-boxes"}));
  train_cmd->add_option("--out", train_out, "output directory");
  train_cmd->add_option("--fold", train_fold, "fold index (-1 = all folds)");
  add_common_flags(train_cmd, flags, rc);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_fmt = "fgse-jsonl", eval_out;
  int eval_fold = -1;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--data", eval_data, "dataset path")->required();
  eval_cmd->add_option("--format", eval_fmt, "dataset format")
      ->check(CLI::IsMember({"fgse-jsonl", "bimacs-json", "coax-boxes"}));
  eval_cmd->add_option("--fold", eval_fold, "score this fold's test subject only");
  eval_cmd->add_option("--out", eval_out, "directory for eval.json + manifest");
  add_common_flags(eval_cmd, flags, rc);

  // stream
  auto* stream_cmd = app.add_subcommand("stream", "streaming inference over jsonl frames");
  std::string stream_ckpt, stream_input;
  int stream_port = 0;
  std::string stream_unix;
  stream_cmd->add_option("--checkpoint", stream_ckpt, "checkpoint path")->required();
  stream_cmd->add_option("--input", stream_input, "jsonl file ('-' = stdin)");
  stream_cmd->add_option("--listen", stream_port, "accept one TCP connection on this port");
  stream_cmd->add_option("--unix", stream_unix, "accept one connection on a unix socket");
  add_common_flags(stream_cmd, flags, rc);

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "throughput and delay report");
  std::string bench_ckpt, bench_data, bench_fmt = "fgse-jsonl";
  long bench_frames = 2000;
  bench_cmd->add_option("--checkpoint", bench_ckpt, "checkpoint path")->required();
  bench_cmd->add_option("--data", bench_data, "dataset path")->required();
  bench_cmd->add_option("--format", bench_fmt, "dataset format")
      ->check(CLI::IsMember({"fgse-jsonl", "bimacs-json", "coax-boxes"}));
  bench_cmd->add_option("--frames", bench_frames, "max frames to push");
  add_common_flags(bench_cmd, flags, rc);

  // scaling
  auto* scaling_cmd = app.add_subcommand("scaling", "window-length sweep (CSV)");
  std::string scal_data, scal_fmt = "fgse-jsonl", scal_windows = "10,20,30,40", scal_out;
  int scal_seeds = 3, scal_fold = 0;
  scaling_cmd->add_option("--data", scal_data, "dataset path")->required();
  scaling_cmd->add_option("--format", scal_fmt, "dataset format")
      ->check(CLI::IsMember({"fgse-jsonl", "bimacs-json", "coax-boxes"}));
  scaling_cmd->add_option("--windows", scal_windows, "comma-separated window lengths");
  scaling_cmd->add_option("--seeds", scal_seeds, "seeds per window");
  scaling_cmd->add_option("--fold", scal_fold, "fold index to sweep");
  scaling_cmd->add_option("--out", scal_out, "CSV output path");
  add_common_flags(scaling_cmd, flags, rc);

  // params
  auto* params_cmd = app.add_subcommand("params", "print the learned-parameter count");
  int par_categories = 12, par_classes = 14, par_heads = 2;
  params_cmd->add_option("--categories", par_categories, "object vocabulary size");
  params_cmd->add_option("--classes", par_classes, "label count per head");
  params_cmd->add_option("--label-heads", par_heads, "label streams (1 or 2)");
  add_common_flags(params_cmd, flags, rc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (synth->parsed()) {
      if (flags.seed_set) synth_seed = flags.seed;
      return cmd_synth(rc, synth_out, synth_subjects, synth_episodes, synth_seed, synth_profile,
                       synth_noise);
    }
    if (convert->parsed()) return cmd_convert(rc, conv_in, conv_fmt, conv_out);
    if (train_cmd->parsed()) return cmd_train(rc, train_data, train_fmt, train_out, train_fold);
    if (eval_cmd->parsed()) {
      return cmd_eval(rc, !flags.output_mode.empty(), eval_ckpt, eval_data, eval_fmt, eval_fold,
                      eval_out);
    }
    if (stream_cmd->parsed()) return cmd_stream(rc, stream_ckpt, stream_input, stream_port, stream_unix);
    if (bench_cmd->parsed()) return cmd_bench(rc, bench_ckpt, bench_data, bench_fmt, bench_frames);
    if (scaling_cmd->parsed()) {
      return cmd_scaling(rc, scal_data, scal_fmt, scal_windows, scal_seeds, scal_fold, scal_out);
    }
    if (params_cmd->parsed()) return cmd_params(rc, par_categories, par_classes, par_heads);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
