// Python bindings: statistics, grid, metrics and the command operations.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "awrs/commands.hpp"
#include "awrs/corpus.hpp"
#include "awrs/error.hpp"
#include "awrs/grid.hpp"
#include "awrs/metrics.hpp"
#include "awrs/stats.hpp"

namespace py = pybind11;
using namespace awrs;

namespace {

std::vector<std::uint8_t> as_labels(const std::vector<int>& labels) {
  return {labels.begin(), labels.end()};
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  d["auc"] = r.auc.mean;
  d["mrr"] = r.mrr.mean;
  d["ndcg5"] = r.ndcg5.mean;
  d["ndcg10"] = r.ndcg10.mean;
  d["impressions"] = r.impressions;
  d["scored"] = r.scored;
  return d;
}

// Owns the parsed log alongside its timeline.
struct Timeline {
  std::vector<ImpressionRecord> log;
  BucketTimeline timeline;
};

Overrides overrides(std::optional<std::uint64_t> seed, std::optional<int> grid_d,
                    std::optional<Timestamp> bucket_width, std::optional<std::string> mode) {
  Overrides o;
  o.seed = seed;
  o.grid_d = grid_d;
  o.bucket_width = bucket_width;
  if (mode) o.mode = parse_mode(*mode);
  return o;
}

}  // namespace

PYBIND11_MODULE(_awrs, m) {
  m.doc() = "Avoidance-aware news recommendation core";
  py::register_exception<Error>(m, "AwrsError", PyExc_ValueError);

  m.def("epi_ratio", &epi_ratio, py::arg("exposures"), py::arg("impressions"));
  m.def("avoidance_ratio", &avoidance_ratio, py::arg("clicks"), py::arg("exposures"));
  m.def("quantize", &quantize, py::arg("value"), py::arg("D"));
  m.def(
      "engagement_index",
      [](double av, double epi, int D) {
        const auto i = engagement_index(av, epi, D);
        return py::make_tuple(i.av_idx, i.epi_idx, i.flat);
      },
      py::arg("av"), py::arg("epi"), py::arg("D"), "Returns (av_idx, epi_idx, flat).");
  m.def(
      "engagement_cell",
      [](int flat, int D) {
        const auto i = engagement_cell(flat, D);
        return py::make_tuple(i.av_idx, i.epi_idx);
      },
      py::arg("flat"), py::arg("D"));

  m.def(
      "auc", [](const std::vector<double>& s, const std::vector<int>& y) { return auc(s, as_labels(y)); },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "mrr", [](const std::vector<double>& s, const std::vector<int>& y) { return mrr(s, as_labels(y)); },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "ndcg",
      [](const std::vector<double>& s, const std::vector<int>& y, std::size_t k) {
        return ndcg_at_k(s, as_labels(y), k);
      },
      py::arg("scores"), py::arg("labels"), py::arg("k"));

  py::class_<Timeline>(m, "Timeline")
      .def_static(
          "from_behaviors",
          [](const std::string& path, Timestamp bucket_width) {
            auto t = std::make_unique<Timeline>();
            t->log = parse_behaviors_file(path);
            t->timeline = build_timeline(t->log, bucket_width);
            return t;
          },
          py::arg("path"), py::arg("bucket_width") = 3600)
      .def("__len__", [](const Timeline& t) { return t.timeline.size(); })
      .def_property_readonly("records", [](const Timeline& t) { return t.log.size(); })
      .def("boundary", [](const Timeline& t, std::size_t k) { return t.timeline.boundary(k); })
      .def("impressions", [](const Timeline& t, std::size_t k) { return t.timeline.snapshot(k).impressions(); })
      .def(
          "counts",
          [](const Timeline& t, std::size_t k) {
            py::dict d;
            for (const auto& [id, c] : t.timeline.snapshot(k).articles()) {
              d[py::str(std::string(id))] = py::make_tuple(c.exposures, c.clicks);
            }
            return d;
          },
          "news_id -> (exposures, clicks) at boundary k.")
      .def("epi", [](const Timeline& t, std::size_t k, const std::string& id) { return epi(t.timeline.snapshot(k), id); })
      .def("avoidance",
           [](const Timeline& t, std::size_t k, const std::string& id) { return avoidance(t.timeline.snapshot(k), id); });

  m.def(
      "synth",
      [](const std::filesystem::path& spec, const std::filesystem::path& out, std::optional<std::uint64_t> seed) {
        auto s = load_synthetic_spec(spec);
        if (seed) s.seed = *seed;
        return cmd_synth(s, out).records.size();
      },
      py::arg("spec"), py::arg("out"), py::arg("seed") = py::none(), "Writes a corpus; returns the record count.");
  m.def(
      "stats",
      [](const std::filesystem::path& behaviors, Timestamp bucket_width, int grid_d, const std::filesystem::path& out) {
        const auto s = cmd_stats(behaviors, bucket_width, grid_d, out);
        return py::make_tuple(s.records, s.buckets, s.skipped_rows);
      },
      py::arg("behaviors"), py::arg("bucket_width") = 3600, py::arg("grid_d") = 5, py::arg("out"),
      "Returns (records, buckets, skipped_rows).");
  m.def(
      "train",
      [](const std::filesystem::path& config, const std::filesystem::path& out, std::optional<std::uint64_t> seed,
         std::optional<int> grid_d, std::optional<Timestamp> bucket_width, std::optional<std::string> mode) {
        auto cfg = load_train_config(config);
        apply(overrides(seed, grid_d, bucket_width, mode), cfg);
        py::gil_scoped_release release;
        const auto o = cmd_train(cfg, out);
        py::gil_scoped_acquire acquire;
        py::dict d;
        d["steps"] = o.result.steps;
        d["best_epoch"] = o.result.best_epoch;
        d["checkpoint"] = o.checkpoint;
        d["test"] = o.test ? py::object(report_dict(*o.test)) : py::none();
        return d;
      },
      py::arg("config"), py::arg("out"), py::arg("seed") = py::none(), py::arg("grid_d") = py::none(),
      py::arg("bucket_width") = py::none(), py::arg("mode") = py::none());
  m.def(
      "evaluate",
      [](const std::filesystem::path& config, const std::filesystem::path& checkpoint,
         const std::filesystem::path& out, std::optional<std::string> mode) {
        const auto cfg = load_train_config(config);
        std::optional<Mode> m;
        if (mode) m = parse_mode(*mode);
        MetricReport r;
        {
          py::gil_scoped_release release;
          r = cmd_eval(cfg, checkpoint, out, m);
        }
        return report_dict(r);
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("out"), py::arg("mode") = py::none());
}
