#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "polarloc/baselines.hpp"
#include "polarloc/error.hpp"
#include "polarloc/pipeline.hpp"

namespace py = pybind11;
using namespace ploc;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

PolarScan to_scan(const FloatArray& image) {
  if (image.ndim() != 2) throw py::value_error("scan image must be 2-D (azimuth, range)");
  PolarScan scan;
  scan.angular_bins = static_cast<std::size_t>(image.shape(0));
  scan.radial_bins = static_cast<std::size_t>(image.shape(1));
  scan.image.assign(image.data(), image.data() + image.size());
  return scan;
}

FloatArray to_array(const std::vector<float>& v, std::vector<py::ssize_t> shape) {
  FloatArray out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

Tensor<float> to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor<float>(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray from_tensor(const Tensor<float>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  return to_array(std::vector<float>(t.data().begin(), t.data().end()), shape);
}

std::vector<Pose> to_poses(const DoubleArray& xy) {
  if (xy.ndim() != 2 || xy.shape(1) != 2) throw py::value_error("poses must be an (n, 2) array of x, y");
  std::vector<Pose> poses;
  for (py::ssize_t i = 0; i < xy.shape(0); ++i) poses.push_back({0.0, xy.at(i, 0), xy.at(i, 1), 0.0});
  return poses;
}

py::dict traversal_dict(const Traversal& t) {
  const std::size_t n = t.size();
  const std::size_t A = n ? t.scans[0].angular_bins : 0, R = n ? t.scans[0].radial_bins : 0;
  FloatArray images({py::ssize_t(n), py::ssize_t(A), py::ssize_t(R)});
  DoubleArray poses({py::ssize_t(n), py::ssize_t(4)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(t.scans[i].image.begin(), t.scans[i].image.end(), images.mutable_data() + i * A * R);
    const Pose& p = t.poses[i];
    double* row = poses.mutable_data() + i * 4;
    row[0] = p.timestamp, row[1] = p.x, row[2] = p.y, row[3] = p.yaw;
  }
  py::dict d;
  d["images"] = images;
  d["poses"] = poses;
  return d;
}

class Model {
 public:
  explicit Model(RadarLocModel<float> m) : model_(std::move(m)) { model_.set_mode(Mode::Eval); }

  static Model build(std::size_t angular_bins, std::size_t radial_bins, std::uint64_t seed) {
    NetworkConfig cfg;
    cfg.angular_bins = angular_bins;
    cfg.radial_bins = radial_bins;
    return Model(RadarLocModel<float>::build(cfg, seed));
  }

  // (n, azimuth, range) images to (n, D) descriptors, eval mode.
  FloatArray describe(const FloatArray& images) {
    if (images.ndim() != 3) throw py::value_error("images must be 3-D (n, azimuth, range)");
    const auto n = static_cast<std::size_t>(images.shape(0));
    const auto A = static_cast<std::size_t>(images.shape(1)), R = static_cast<std::size_t>(images.shape(2));
    Tensor<float> batch(Shape{n, 1, A, R}, std::vector<float>(images.data(), images.data() + images.size()));
    NoGradScope<float> ng;
    return from_tensor(model_.forward(batch));
  }

  py::dict config() const {
    py::dict d;
    d["angular_bins"] = model_.config().angular_bins;
    d["radial_bins"] = model_.config().radial_bins;
    d["descriptor_dim"] = model_.config().descriptor_dim;
    return d;
  }

  void save(const std::filesystem::path& path) const { save_model(path, model_); }

 private:
  RadarLocModel<float> model_;
};

}  // namespace

PYBIND11_MODULE(_polarloc, m) {
  m.doc() = "Polar radar place recognition: descriptors, baselines and evaluation";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);

  m.def(
      "generate_synthetic",
      [](std::uint64_t seed, std::size_t train_scans, std::size_t map_scans, std::size_t query_scans,
         std::size_t angular_bins, std::size_t radial_bins) {
        SyntheticWorldSpec spec;
        spec.seed = seed;
        spec.train_scans = train_scans;
        spec.map_scans = map_scans;
        spec.query_scans = query_scans;
        spec.angular_bins = angular_bins;
        spec.radial_bins = radial_bins;
        const auto ds = generate_synthetic(spec);
        py::dict d;
        d["train"] = traversal_dict(ds.train);
        d["map"] = traversal_dict(ds.map);
        d["query"] = traversal_dict(ds.query);
        return d;
      },
      py::arg("seed") = 7, py::arg("train_scans") = 200, py::arg("map_scans") = 200, py::arg("query_scans") = 200,
      py::arg("angular_bins") = 384, py::arg("radial_bins") = 128,
      "Synthetic traversals as {split: {'images': (n, A, R), 'poses': (n, 4) t, x, y, yaw}}.");

  m.def(
      "roll_angular",
      [](const FloatArray& image, std::ptrdiff_t shift) {
        const auto s = roll_angular(to_scan(image), shift);
        return to_array(s.image, {py::ssize_t(s.angular_bins), py::ssize_t(s.radial_bins)});
      },
      py::arg("image"), py::arg("shift"));

  m.def(
      "ring_key", [](const FloatArray& image, std::size_t rings) { return ring_key(to_scan(image), rings).values; },
      py::arg("image"), py::arg("rings") = ScanContextSpec{}.rings);

  m.def(
      "scancontext",
      [](const FloatArray& image, std::size_t sectors, std::size_t rings) {
        const auto d = scancontext(to_scan(image), ScanContextSpec{sectors, rings});
        return to_array(d.matrix, {py::ssize_t(d.sectors), py::ssize_t(d.rings)});
      },
      py::arg("image"), py::arg("sectors") = ScanContextSpec{}.sectors, py::arg("rings") = ScanContextSpec{}.rings);

  m.def(
      "scancontext_distance",
      [](const FloatArray& a, const FloatArray& b) {
        auto desc = [](const FloatArray& x) {
          if (x.ndim() != 2) throw py::value_error("ScanContext matrix must be 2-D (sectors, rings)");
          return ScanContextDescriptor{std::size_t(x.shape(0)), std::size_t(x.shape(1)),
                                       std::vector<float>(x.data(), x.data() + x.size())};
        };
        return scancontext_distance(desc(a), desc(b));
      },
      py::arg("a"), py::arg("b"));

  m.def(
      "conv2d_circular",
      [](const FloatArray& x, const FloatArray& w, const FloatArray& b, std::size_t stride) {
        return from_tensor(ops::conv2d_circular(to_tensor(x), to_tensor(w), to_tensor(b), stride, stride));
      },
      py::arg("x"), py::arg("weight"), py::arg("bias"), py::arg("stride") = 1);

  m.def(
      "knn",
      [](const FloatArray& map, const FloatArray& query, std::size_t k) {
        if (map.ndim() != 2 || query.ndim() != 1) throw py::value_error("map must be (n, D) and query (D,)");
        std::vector<IndexEntry> entries;
        const auto D = static_cast<std::size_t>(map.shape(1));
        for (py::ssize_t i = 0; i < map.shape(0); ++i)
          entries.push_back({std::to_string(i), Pose{}, std::vector<float>(map.data(i, 0), map.data(i, 0) + D)});
        const auto hits = knn(DescriptorIndex(std::move(entries), "numpy"),
                              std::span<const float>(query.data(), std::size_t(query.size())), k);
        std::vector<std::pair<std::size_t, double>> out;
        for (const auto& h : hits) out.emplace_back(h.index, h.distance);
        return out;
      },
      py::arg("map"), py::arg("query"), py::arg("k"), "(index, distance) pairs, nearest first.");

  m.def(
      "evaluate",
      [](const FloatArray& map, const DoubleArray& map_xy, const FloatArray& queries, const DoubleArray& query_xy,
         std::size_t max_n, std::vector<double> thresholds) {
        auto entries = [](const FloatArray& d, const std::vector<Pose>& poses) {
          if (d.ndim() != 2 || std::size_t(d.shape(0)) != poses.size())
            throw py::value_error("descriptors must be (n, D) with one pose per row");
          std::vector<IndexEntry> out;
          const auto D = static_cast<std::size_t>(d.shape(1));
          for (std::size_t i = 0; i < poses.size(); ++i)
            out.push_back({std::to_string(i), poses[i], std::vector<float>(d.data(i, 0), d.data(i, 0) + D)});
          return out;
        };
        const auto report = evaluate(DescriptorIndex(entries(map, to_poses(map_xy)), "numpy"),
                                     entries(queries, to_poses(query_xy)), max_n, thresholds);
        DoubleArray recall({py::ssize_t(thresholds.size()), py::ssize_t(max_n)});
        for (std::size_t t = 0; t < thresholds.size(); ++t)
          for (std::size_t n = 0; n < max_n; ++n) recall.mutable_at(t, n) = report.recall[t][n];
        return recall;
      },
      py::arg("map"), py::arg("map_xy"), py::arg("queries"), py::arg("query_xy"), py::arg("max_n") = 10,
      py::arg("thresholds") = std::vector<double>{5.0, 10.0},
      "Recall@N as a (thresholds, max_n) array; column n holds Recall@(n+1).");

  m.def(
      "label_pair",
      [](double ax, double ay, double bx, double by) {
        switch (label_pair(Pose{0, ax, ay, 0}, Pose{0, bx, by, 0})) {
          case PairLabel::Similar: return "similar";
          case PairLabel::Dissimilar: return "dissimilar";
          default: return "excluded";
        }
      },
      py::arg("ax"), py::arg("ay"), py::arg("bx"), py::arg("by"));

  m.def(
      "selftest",
      [] {
        std::vector<std::pair<std::string, bool>> out;
        for (const auto& c : run_selftest({})) out.emplace_back(c.name, c.passed);
        return out;
      },
      "Runs the built-in checks; (name, passed) pairs.");

  py::class_<Model>(m, "Model")
      .def_static("build", &Model::build, py::arg("angular_bins") = 384, py::arg("radial_bins") = 128,
                  py::arg("seed") = 7, "Untrained network with seeded initialization.")
      .def_static(
          "load", [](const std::filesystem::path& path) { return Model(load_model(path)); }, py::arg("path"))
      .def("describe", &Model::describe, py::arg("images"))
      .def("save", &Model::save, py::arg("path"))
      .def_property_readonly("config", &Model::config);
}
