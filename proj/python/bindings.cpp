// numpy-facing bindings over the voxc core. Grids cross the boundary as
// (z, y, x) C-order arrays, matching the x-fastest storage of VoxelVolume.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "voxc/completion_model.hpp"
#include "voxc/evaluation.hpp"
#include "voxc/fusion.hpp"
#include "voxc/ground_truth.hpp"
#include "voxc/mesh_export.hpp"
#include "voxc/pipeline.hpp"
#include "voxc/scene_gen.hpp"
#include "voxc/tensor_nn.hpp"
#include "voxc/virtual_scan.hpp"
#include "voxc/voxel_volume.hpp"

namespace py = pybind11;
using namespace voxc;

namespace {

using Triple = std::array<double, 3>;

Vec3 to_vec3(const Triple& a) { return Vec3{a[0], a[1], a[2]}; }
Triple from_vec3(const Vec3& v) { return {v.x, v.y, v.z}; }

template <typename T>
py::array_t<T> grid_to_numpy(const GridDims& d, const std::vector<T>& data) {
  py::array_t<T> out({d.z, d.y, d.x});
  std::memcpy(out.mutable_data(), data.data(), data.size() * sizeof(T));
  return out;
}

GridDims dims_of(const py::buffer_info& info) {
  if (info.ndim != 3) throw std::invalid_argument("expected a 3-D (z, y, x) array");
  return GridDims{int(info.shape[2]), int(info.shape[1]), int(info.shape[0])};
}

VoxelVolume volume_from_numpy(py::array_t<float, py::array::c_style | py::array::forcecast> arr,
                              double voxel_size, const Triple& origin, const std::string& kind) {
  VolumeKind k;
  if (kind == "tsdf")
    k = VolumeKind::TSDF;
  else if (kind == "tdf")
    k = VolumeKind::TDF;
  else
    throw std::invalid_argument("kind must be 'tsdf' or 'tdf'");
  const auto info = arr.request();
  VoxelVolume v(dims_of(info), voxel_size, to_vec3(origin), k, 0.0f);
  std::memcpy(v.data.data(), info.ptr, v.data.size() * sizeof(float));
  return v;
}

LabelVolume labels_from_numpy(py::array_t<uint8_t, py::array::c_style | py::array::forcecast> arr,
                              double voxel_size, const Triple& origin) {
  const auto info = arr.request();
  LabelVolume l(dims_of(info), voxel_size, to_vec3(origin), kEmpty);
  std::memcpy(l.labels.data(), info.ptr, l.labels.size());
  return l;
}

std::vector<uint8_t> mask_from_numpy(
    py::array_t<uint8_t, py::array::c_style | py::array::forcecast> arr, size_t expect) {
  const auto info = arr.request();
  size_t n = 1;
  for (auto s : info.shape) n *= size_t(s);
  if (n != expect) throw std::invalid_argument("mask size does not match the grid");
  std::vector<uint8_t> m(n);
  std::memcpy(m.data(), info.ptr, n);
  return m;
}

py::object masked(const MaskedError& e) {
  if (!e.defined) return py::none();
  return py::float_(e.value);
}

SceneParams scene_params(uint64_t seed, Triple room_min, Triple room_max, int furniture_min,
                         int furniture_max, int windows_min, int windows_max, int place_retries) {
  SceneParams p;
  p.seed = seed;
  p.room_min = to_vec3(room_min);
  p.room_max = to_vec3(room_max);
  p.furniture_min = furniture_min;
  p.furniture_max = furniture_max;
  p.windows_min = windows_min;
  p.windows_max = windows_max;
  p.place_retries = place_retries;
  return p;
}

VoxelVolume scan_and_fuse(const Scene& scene, int level, const Triple& dims_xyz,
                          const Triple& origin, uint64_t seed, int candidates, int height_tries,
                          double lambda, float weight_cap) {
  AabbTree tree = scene_tree(scene);
  TrajectoryStats stats;
  stats.reference = reference_histogram(stats.reference.spec);
  TrajectoryParams params;
  params.seed = seed;
  params.candidates = candidates;
  params.height_tries = height_tries;
  params.lambda = lambda;
  Trajectory traj = build_trajectory(tree, scene.bounds, stats, params);
  GridPlacement placement;
  placement.dims = GridDims{int(dims_xyz[0]), int(dims_xyz[1]), int(dims_xyz[2])};
  placement.origin = to_vec3(origin);
  return fuse_trajectory(tree, traj.cameras, HierarchyLevelSpec::standard(level), placement,
                         weight_cap);
}

py::tuple mesh_arrays(const Mesh& m) {
  py::array_t<double> verts({py::ssize_t(m.vertices.size()), py::ssize_t(3)});
  auto* vp = verts.mutable_data();
  for (size_t i = 0; i < m.vertices.size(); ++i) {
    vp[3 * i] = m.vertices[i].x;
    vp[3 * i + 1] = m.vertices[i].y;
    vp[3 * i + 2] = m.vertices[i].z;
  }
  py::array_t<int> faces({py::ssize_t(m.faces.size()), py::ssize_t(3)});
  auto* fp = faces.mutable_data();
  for (size_t i = 0; i < m.faces.size(); ++i)
    for (int k = 0; k < 3; ++k) fp[3 * i + k] = m.faces[i][k];
  return py::make_tuple(verts, faces);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hierarchical autoregressive volumetric completion core";
  m.attr("NUM_CLASSES") = kNumClasses;
  m.attr("NUM_LEVELS") = kNumLevels;
  m.attr("TRUNCATION_VOXELS") = kTruncationVoxels;

  m.def("class_names", []() {
    std::vector<std::string> names;
    for (int i = 0; i < kNumClasses; ++i) names.push_back(class_name(uint8_t(i)));
    return names;
  });

  py::class_<VoxelVolume>(m, "VoxelVolume")
      .def(py::init(&volume_from_numpy), py::arg("data"), py::arg("voxel_size"),
           py::arg("origin") = Triple{0, 0, 0}, py::arg("kind") = "tdf")
      .def_property_readonly("shape",
                             [](const VoxelVolume& v) {
                               return py::make_tuple(v.dims.z, v.dims.y, v.dims.x);
                             })
      .def_property_readonly("voxel_size", [](const VoxelVolume& v) { return v.voxel_size; })
      .def_property_readonly("origin", [](const VoxelVolume& v) { return from_vec3(v.origin); })
      .def_property_readonly("kind",
                             [](const VoxelVolume& v) {
                               return v.kind == VolumeKind::TSDF ? "tsdf" : "tdf";
                             })
      .def("numpy", [](const VoxelVolume& v) { return grid_to_numpy(v.dims, v.data); })
      .def("save", [](const VoxelVolume& v, const std::string& path) { save_grid(v, path); })
      .def("__repr__", [](const VoxelVolume& v) {
        return "VoxelVolume(" + std::to_string(v.dims.x) + "x" + std::to_string(v.dims.y) + "x" +
               std::to_string(v.dims.z) + ", " +
               (v.kind == VolumeKind::TSDF ? "tsdf" : "tdf") + ")";
      });

  py::class_<LabelVolume>(m, "LabelVolume")
      .def(py::init(&labels_from_numpy), py::arg("labels"), py::arg("voxel_size"),
           py::arg("origin") = Triple{0, 0, 0})
      .def_property_readonly("shape",
                             [](const LabelVolume& v) {
                               return py::make_tuple(v.dims.z, v.dims.y, v.dims.x);
                             })
      .def_property_readonly("voxel_size", [](const LabelVolume& v) { return v.voxel_size; })
      .def_property_readonly("origin", [](const LabelVolume& v) { return from_vec3(v.origin); })
      .def("numpy", [](const LabelVolume& v) { return grid_to_numpy(v.dims, v.labels); })
      .def("save", [](const LabelVolume& v, const std::string& path) { save_grid(v, path); });

  m.def("load_volume", &load_volume, py::arg("path"));
  m.def("load_labels", &load_labels, py::arg("path"));

  py::class_<Scene>(m, "Scene")
      .def_property_readonly("triangle_count", [](const Scene& s) { return s.triangles.size(); })
      .def_property_readonly("furniture_count", [](const Scene& s) { return s.furniture.size(); })
      .def_property_readonly("bounds",
                             [](const Scene& s) {
                               return py::make_tuple(from_vec3(s.bounds.lo),
                                                     from_vec3(s.bounds.hi));
                             })
      .def("triangles",
           [](const Scene& s) {
             py::array_t<double> out(
                 {py::ssize_t(s.triangles.size()), py::ssize_t(3), py::ssize_t(3)});
             auto* p = out.mutable_data();
             for (const auto& t : s.triangles)
               for (const Vec3& v : {t.tri.a, t.tri.b, t.tri.c}) {
                 *p++ = v.x;
                 *p++ = v.y;
                 *p++ = v.z;
               }
             return out;
           })
      .def("triangle_labels",
           [](const Scene& s) {
             py::array_t<uint8_t> out(py::ssize_t(s.triangles.size()));
             auto* p = out.mutable_data();
             for (const auto& t : s.triangles) *p++ = t.label;
             return out;
           })
      .def("export_obj", &export_scene_obj, py::arg("path"))
      .def("export_json", &export_scene_json, py::arg("path"));

  m.def("generate_scene", [](uint64_t seed, Triple room_min, Triple room_max, int furniture_min,
                             int furniture_max, int windows_min, int windows_max,
                             int place_retries) {
          return generate_scene(scene_params(seed, room_min, room_max, furniture_min,
                                             furniture_max, windows_min, windows_max,
                                             place_retries));
        },
        py::arg("seed"), py::arg("room_min") = Triple{3.5, 2.4, 3.5},
        py::arg("room_max") = Triple{7.0, 3.2, 7.0}, py::arg("furniture_min") = 3,
        py::arg("furniture_max") = 8, py::arg("windows_min") = 1, py::arg("windows_max") = 2,
        py::arg("place_retries") = 100);

  m.def("plan_grids", [](Triple lo, Triple hi, double margin) {
          Aabb box;
          box.expand(to_vec3(lo));
          box.expand(to_vec3(hi));
          auto plans = plan_grids(box, margin);
          py::list out;
          for (int level = 0; level < kNumLevels; ++level) {
            py::dict d;
            d["level"] = level;
            d["voxel_size"] = HierarchyLevelSpec::standard(level).voxel_size;
            d["dims"] = py::make_tuple(plans[level].dims.x, plans[level].dims.y,
                                       plans[level].dims.z);
            d["origin"] = from_vec3(plans[level].origin);
            out.append(d);
          }
          return out;
        },
        py::arg("lo"), py::arg("hi"), py::arg("margin") = 0.15);

  m.def("scan_and_fuse", &scan_and_fuse, py::arg("scene"), py::arg("level"), py::arg("dims"),
        py::arg("origin"), py::arg("seed") = 0, py::arg("candidates") = 32,
        py::arg("height_tries") = 64, py::arg("lambda_") = 0.5, py::arg("weight_cap") = 255.0f,
        py::call_guard<py::gil_scoped_release>());

  m.def("mesh_to_tdf", [](const Scene& scene, int level, Triple dims_xyz, Triple origin) {
          GridPlacement placement;
          placement.dims = GridDims{int(dims_xyz[0]), int(dims_xyz[1]), int(dims_xyz[2])};
          placement.origin = to_vec3(origin);
          GroundTruthGrids gt;
          {
            py::gil_scoped_release release;
            gt = mesh_to_tdf(scene, HierarchyLevelSpec::standard(level), placement);
          }
          return py::make_tuple(std::move(gt.tdf), std::move(gt.labels));
        },
        py::arg("scene"), py::arg("level"), py::arg("dims"), py::arg("origin"));

  m.def("emd",
        [](py::array_t<double, py::array::c_style | py::array::forcecast> a,
           py::array_t<double, py::array::c_style | py::array::forcecast> b, double lo,
           double hi) {
          const auto ia = a.request(), ib = b.request();
          if (ia.ndim != 1 || ib.ndim != 1 || ia.shape[0] != ib.shape[0])
            throw std::invalid_argument("histograms must be equal-length 1-D arrays");
          Histogram ha, hb;
          ha.spec = hb.spec = HistSpec{lo, hi, int(ia.shape[0])};
          ha.p.assign(static_cast<const double*>(ia.ptr),
                      static_cast<const double*>(ia.ptr) + ia.shape[0]);
          hb.p.assign(static_cast<const double*>(ib.ptr),
                      static_cast<const double*>(ib.ptr) + ib.shape[0]);
          return emd_1d(ha, hb);
        },
        py::arg("a"), py::arg("b"), py::arg("lo") = 0.0, py::arg("hi") = 8.0);

  m.def("marching_cubes",
        [](const VoxelVolume& v, double iso) { return mesh_arrays(marching_cubes(v, iso)); },
        py::arg("volume"), py::arg("iso") = 1.0);

  m.def("export_mesh", [](const VoxelVolume& tdf, const std::string& path,
                          const LabelVolume* labels, double iso) {
          Mesh mesh = marching_cubes(tdf, iso);
          if (labels) color_by_labels(mesh, *labels);
          if (path.size() >= 4 && path.substr(path.size() - 4) == ".ply")
            save_ply(mesh, path);
          else
            save_obj(mesh, path);
          return mesh.vertex_count();
        },
        py::arg("tdf"), py::arg("path"), py::arg("labels") = nullptr, py::arg("iso") = 1.0);

  m.def("l1_completion_errors", [](const VoxelVolume& pred, const VoxelVolume& target,
                                   const VoxelVolume& input, double threshold) {
          CompletionErrors e = l1_completion_errors(pred, target, input, threshold);
          py::dict d;
          d["entire"] = masked(e.entire);
          d["pred_surf"] = masked(e.pred_surf);
          d["target_surf"] = masked(e.target_surf);
          d["unknown_space"] = masked(e.unk_space);
          return d;
        },
        py::arg("pred"), py::arg("target"), py::arg("input"), py::arg("threshold") = 1.0);

  m.def("vis_mask", [](const VoxelVolume& input, const VoxelVolume& target, double threshold) {
          return grid_to_numpy(input.dims, vis_mask(input, target, threshold));
        },
        py::arg("input"), py::arg("target"), py::arg("threshold") = 1.0);

  m.def("semantic_accuracy",
        [](const LabelVolume& pred, const LabelVolume& gt,
           py::array_t<uint8_t, py::array::c_style | py::array::forcecast> mask) {
          auto r = semantic_accuracy(pred, gt, mask_from_numpy(mask, pred.labels.size()));
          py::dict d;
          d["average"] = r.average;
          d["present_classes"] = r.present_classes;
          d["mask_count"] = r.mask_count;
          return d;
        },
        py::arg("pred"), py::arg("gt"), py::arg("mask"));

  m.def("semantic_iou",
        [](const LabelVolume& pred, const LabelVolume& gt,
           py::array_t<uint8_t, py::array::c_style | py::array::forcecast> mask) {
          auto per = semantic_iou(pred, gt, mask_from_numpy(mask, pred.labels.size()));
          py::dict d;
          for (int c = 0; c < kNumClasses; ++c)
            d[class_name(uint8_t(c))] = per[c].defined ? py::object(py::float_(per[c].iou))
                                                       : py::object(py::none());
          return d;
        },
        py::arg("pred"), py::arg("gt"), py::arg("mask"));

  m.def("seam_score", &seam_score, py::arg("tdf"), py::arg("block") = 32);

  m.def("conv3d",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> x,
           py::array_t<float, py::array::c_style | py::array::forcecast> weight,
           py::array_t<float, py::array::c_style | py::array::forcecast> bias) {
          const auto ix = x.request(), iw = weight.request(), ib = bias.request();
          if (ix.ndim != 5) throw std::invalid_argument("x must be (n, c, d, h, w)");
          if (iw.ndim != 5 || iw.shape[2] != iw.shape[3] || iw.shape[3] != iw.shape[4])
            throw std::invalid_argument("weight must be (out, in, k, k, k) with cubic k");
          if (ib.ndim != 1 || ib.shape[0] != iw.shape[0])
            throw std::invalid_argument("bias must be (out,)");
          if (iw.shape[1] != ix.shape[1])
            throw std::invalid_argument("weight input channels must match x");
          Tensor5<float> t(int(ix.shape[0]), int(ix.shape[1]), int(ix.shape[2]), int(ix.shape[3]),
                           int(ix.shape[4]));
          std::memcpy(t.v.data(), ix.ptr, t.v.size() * sizeof(float));
          Conv3dLayer<float> layer(int(iw.shape[1]), int(iw.shape[0]), int(iw.shape[2]));
          std::memcpy(layer.weight.data(), iw.ptr, layer.weight.size() * sizeof(float));
          std::memcpy(layer.bias.data(), ib.ptr, layer.bias.size() * sizeof(float));
          Tensor5<float> y = conv3d_forward(t, layer);
          py::array_t<float> out({y.n, y.c, y.d, y.h, y.w});
          std::memcpy(out.mutable_data(), y.v.data(), y.v.size() * sizeof(float));
          return out;
        },
        py::arg("x"), py::arg("weight"), py::arg("bias"));

  py::class_<ModelHierarchy>(m, "ModelHierarchy")
      .def_property_readonly("stage_levels",
                             [](const ModelHierarchy& h) { return h.stage_levels; })
      .def("infer",
           [](const ModelHierarchy& h, const std::vector<VoxelVolume>& stage_tsdfs) {
             std::vector<const VoxelVolume*> ptrs;
             for (const auto& v : stage_tsdfs) ptrs.push_back(&v);
             InferenceResult r;
             {
               py::gil_scoped_release release;
               r = infer_scene(h, ptrs);
             }
             py::dict d;
             d["tdf"] = std::move(r.tdf);
             d["labels"] = std::move(r.labels);
             d["forward_passes"] = r.forward_passes;
             d["passes_per_stage"] = r.passes_per_stage;
             return d;
           },
           py::arg("stage_tsdfs"))
      .def("infer_blocked",
           [](const ModelHierarchy& h, const std::vector<VoxelVolume>& stage_tsdfs, int block) {
             std::vector<const VoxelVolume*> ptrs;
             for (const auto& v : stage_tsdfs) ptrs.push_back(&v);
             BlockedResult r;
             {
               py::gil_scoped_release release;
               r = infer_scene_blocked(h, ptrs, block);
             }
             py::dict d;
             d["tdf"] = std::move(r.tdf);
             d["labels"] = std::move(r.labels);
             d["forward_passes"] = r.forward_passes;
             d["blocks"] = r.blocks;
             return d;
           },
           py::arg("stage_tsdfs"), py::arg("block") = 32);

  m.def("load_hierarchy", &load_hierarchy, py::arg("dir"));

  py::class_<PipelineConfig>(m, "Pipeline")
      .def(py::init([](const std::string& config_path, const std::string& out_dir) {
             PipelineConfig cfg = PipelineConfig::from_json_file(config_path);
             if (!out_dir.empty()) cfg.out_dir = out_dir;
             cfg.validate();
             return cfg;
           }),
           py::arg("config_path"), py::arg("out_dir") = "")
      .def_property_readonly("out_dir", [](const PipelineConfig& c) { return c.out_dir; })
      .def_property_readonly("scene_count", [](const PipelineConfig& c) { return c.scene_count; })
      .def_property_readonly("heldout", [](const PipelineConfig& c) { return c.heldout; })
      .def("gen_scenes", &stage_gen_scenes, py::call_guard<py::gil_scoped_release>())
      .def("scan", &stage_scan, py::call_guard<py::gil_scoped_release>())
      .def("fuse", &stage_fuse, py::call_guard<py::gil_scoped_release>())
      .def("make_gt", &stage_make_gt, py::call_guard<py::gil_scoped_release>())
      .def("build_corpus", &stage_build_corpus, py::call_guard<py::gil_scoped_release>())
      .def("train",
           [](const PipelineConfig& c, const std::string& variant, int level) {
             py::gil_scoped_release release;
             stage_train(c, variant_from_name(variant), level);
           },
           py::arg("variant") = "full", py::arg("level") = -1)
      .def("infer",
           [](const PipelineConfig& c, const std::string& variant) {
             py::gil_scoped_release release;
             stage_infer(c, variant_from_name(variant));
           },
           py::arg("variant") = "full")
      .def("evaluate", &stage_eval, py::call_guard<py::gil_scoped_release>())
      .def("seam_demo", &stage_seam_demo, py::call_guard<py::gil_scoped_release>())
      .def("run_all", &run_full_pipeline, py::call_guard<py::gil_scoped_release>())
      .def("scenes_dir", &scenes_dir)
      .def("fused_dir", &fused_dir)
      .def("gt_dir", &gt_dir)
      .def("eval_dir", &eval_dir)
      .def("seam_dir", &seam_dir)
      .def("model_dir", [](const PipelineConfig& c, const std::string& v) {
        return model_dir(c, variant_from_name(v));
      })
      .def("pred_dir", [](const PipelineConfig& c, const std::string& v) {
        return pred_dir(c, variant_from_name(v));
      });
}
