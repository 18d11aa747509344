#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "fgse/checkpoint.hpp"
#include "fgse/dataset.hpp"
#include "fgse/manifest.hpp"
#include "fgse/model.hpp"
#include "fgse/stream.hpp"
#include "fgse/synth.hpp"
#include "fgse/train.hpp"

namespace py = pybind11;
using namespace fgse;

namespace {

FgseConfig config_from_dict(const py::dict& d) {
  FgseConfig cfg;
  if (d.contains("d_model")) cfg.d_model = d["d_model"].cast<int>();
  if (d.contains("n_heads")) cfg.n_heads = d["n_heads"].cast<int>();
  if (d.contains("n_graph_layers")) cfg.n_graph_layers = d["n_graph_layers"].cast<int>();
  if (d.contains("n_seq_layers")) cfg.n_seq_layers = d["n_seq_layers"].cast<int>();
  if (d.contains("window")) cfg.window = d["window"].cast<int>();
  if (d.contains("ff_mult")) cfg.ff_mult = d["ff_mult"].cast<int>();
  if (d.contains("pooling")) cfg.pooling = pooling_mode_from_name(d["pooling"].cast<std::string>());
  if (d.contains("output_mode")) {
    cfg.output = output_mode_from_name(d["output_mode"].cast<std::string>());
  }
  return cfg;
}

TrainConfig train_config_from_dict(const py::dict& d) {
  TrainConfig t;
  if (d.contains("epochs")) t.epochs = d["epochs"].cast<int>();
  if (d.contains("batch_size")) t.batch_size = d["batch_size"].cast<int>();
  if (d.contains("lr")) t.adam.lr = d["lr"].cast<float>();
  if (d.contains("stride")) t.stride = d["stride"].cast<int>();
  if (d.contains("mirror")) t.mirror = d["mirror"].cast<bool>();
  if (d.contains("downsample")) t.downsample = d["downsample"].cast<int>();
  if (d.contains("seed")) t.seed = d["seed"].cast<unsigned>();
  return t;
}

py::dict config_to_dict(const FgseConfig& c) {
  py::dict d;
  d["d_model"] = c.d_model;
  d["n_heads"] = c.n_heads;
  d["n_graph_layers"] = c.n_graph_layers;
  d["n_seq_layers"] = c.n_seq_layers;
  d["window"] = c.window;
  d["ff_mult"] = c.ff_mult;
  d["n_classes"] = c.n_classes;
  d["n_categories"] = c.n_categories;
  d["n_heads_out"] = c.n_heads_out;
  d["pooling"] = pooling_mode_name(c.pooling);
  d["output_mode"] = output_mode_name(c.output);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Streaming manipulation-action recognition on semantic scene graphs";
  m.attr("__version__") = kToolVersion;

  m.def("relation_names", []() {
    return std::vector<std::string>(kRelationNames.begin(), kRelationNames.end());
  });

  py::class_<EpisodeDataset>(m, "Dataset")
      .def_static(
          "load",
          [](const std::string& path, const std::string& format) {
            return load_dataset(path, dataset_format_from_name(format));
          },
          py::arg("path"), py::arg("format") = "fgse-jsonl")
      .def("save",
           [](const EpisodeDataset& ds, const std::string& path) { save_dataset(ds, path); })
      .def_property_readonly("num_episodes",
                             [](const EpisodeDataset& ds) { return ds.sequences.size(); })
      .def_property_readonly("subjects", [](const EpisodeDataset& ds) { return ds.subjects(); })
      .def_property_readonly("objects", [](const EpisodeDataset& ds) { return ds.vocab.objects; })
      .def_property_readonly("labels", [](const EpisodeDataset& ds) { return ds.vocab.labels; })
      .def_property_readonly("heads", [](const EpisodeDataset& ds) { return ds.vocab.heads; })
      .def("episode_length",
           [](const EpisodeDataset& ds, int i) { return ds.sequences.at(i).length(); })
      .def("episode_labels",
           [](const EpisodeDataset& ds, int i, int head) {
             return ds.sequences.at(i).labels.at(head);
           })
      .def("content_hash", [](const EpisodeDataset& ds) { return ds.content_hash(); });

  m.def(
      "generate_suite",
      [](int subjects, int episodes, unsigned seed, const std::string& profile) {
        return generate_benchmark_suite(subjects, episodes, seed, suite_profile(profile));
      },
      py::arg("subjects") = 5, py::arg("episodes") = 10, py::arg("seed") = 7,
      py::arg("profile") = "default");

  py::class_<FgseModel>(m, "Model")
      .def_static("load", [](const std::string& path) { return load_checkpoint(path); })
      .def("save",
           [](const FgseModel& mdl, const std::string& path) { save_checkpoint(mdl, path); })
      .def_property_readonly("config",
                             [](const FgseModel& mdl) { return config_to_dict(mdl.config()); })
      .def_property_readonly("num_parameters", [](const FgseModel& mdl) {
        long total = 0;
        for (const auto& [name, t] : mdl.named_parameters()) total += static_cast<long>(t.size());
        return total;
      });

  m.def(
      "count_params",
      [](const py::dict& cfg, int categories, int classes, int heads_out) {
        FgseConfig c = config_from_dict(cfg);
        c.n_categories = categories;
        c.n_classes = classes;
        c.n_heads_out = heads_out;
        return count_params(c);
      },
      py::arg("config"), py::arg("categories"), py::arg("classes"), py::arg("heads_out") = 2);

  m.def(
      "train_fold",
      [](const EpisodeDataset& ds, int fold_index, const py::dict& model_cfg,
         const py::dict& train_cfg) {
        const auto folds = make_folds(ds);
        return train(ds, folds.at(fold_index), config_from_dict(model_cfg),
                     train_config_from_dict(train_cfg));
      },
      py::arg("dataset"), py::arg("fold"), py::arg("model_config") = py::dict(),
      py::arg("train_config") = py::dict());

  m.def(
      "evaluate",
      [](const FgseModel& mdl, const EpisodeDataset& ds, int fold_index, int downsample) {
        std::vector<GraphSequence> episodes;
        if (fold_index >= 0) {
          const auto folds = make_folds(ds);
          for (int i : folds.at(fold_index).test_indices) episodes.push_back(ds.sequences[i]);
        } else {
          episodes = ds.sequences;
        }
        InferConfig icfg;
        icfg.downsample = downsample;
        const EvalResult r = evaluate(std::make_shared<FgseWindowModel>(mdl), episodes, icfg,
                                      static_cast<int>(ds.vocab.labels.size()));
        py::dict out;
        out["f1_macro"] = r.f1_macro;
        out["f1_micro"] = r.f1_micro;
        out["frames"] = r.frames;
        return out;
      },
      py::arg("model"), py::arg("dataset"), py::arg("fold") = -1, py::arg("downsample") = 3);

  m.def(
      "stream_episode",
      [](const FgseModel& mdl, const EpisodeDataset& ds, int episode, int downsample, int stride) {
        const GraphSequence reduced =
            downsample == 1 ? ds.sequences.at(episode)
                            : fgse::downsample(ds.sequences.at(episode), downsample);
        StreamEngine engine(std::make_shared<FgseWindowModel>(mdl), stride);
        engine.set_fps(reduced.fps);
        std::vector<py::dict> out;
        auto absorb = [&](const std::vector<FinalPrediction>& preds) {
          for (const FinalPrediction& p : preds) {
            py::dict d;
            d["t"] = p.time_index;
            d["labels"] = p.labels;
            d["votes"] = p.vote_counts;
            d["delay_frames"] = p.latency_frames;
            out.push_back(std::move(d));
          }
        };
        for (const SceneGraph& g : reduced.graphs) absorb(engine.push_frame(g));
        absorb(engine.flush());
        return out;
      },
      py::arg("model"), py::arg("dataset"), py::arg("episode"), py::arg("downsample") = 3,
      py::arg("stride") = 1);

  m.def(
      "majority_vote",
      [](const std::vector<int>& votes, const std::vector<std::vector<float>>& rows) {
        return majority_vote(votes, rows);
      },
      py::arg("votes"), py::arg("softmax_rows") = std::vector<std::vector<float>>{});

  m.def(
      "f1_scores",
      [](const std::vector<int>& preds, const std::vector<int>& truth, int n_classes) {
        const F1Result r = f1_scores(preds, truth, n_classes);
        return py::make_tuple(r.macro, r.micro);
      },
      py::arg("preds"), py::arg("truth"), py::arg("n_classes"));
}
