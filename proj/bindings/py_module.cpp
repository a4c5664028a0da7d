#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "curricubench/experiment.hpp"

namespace py = pybind11;
namespace cb = curricubench;

namespace {

cb::ImageU8 image_from_array(const py::array_t<std::uint8_t>& arr) {
  cb::require(arr.ndim() == 2, cb::Errc::Shape, "expected a [H,W] uint8 array");
  cb::ImageU8 img(static_cast<std::size_t>(arr.shape(0)),
                  static_cast<std::size_t>(arr.shape(1)));
  const auto view = arr.unchecked<2>();
  for (std::size_t r = 0; r < img.height; ++r)
    for (std::size_t c = 0; c < img.width; ++c)
      img.at(r, c) = view(static_cast<py::ssize_t>(r), static_cast<py::ssize_t>(c));
  return img;
}

py::array_t<std::uint8_t> image_to_array(const cb::ImageU8& img) {
  py::array_t<std::uint8_t> out({img.height, img.width});
  auto view = out.mutable_unchecked<2>();
  for (std::size_t r = 0; r < img.height; ++r)
    for (std::size_t c = 0; c < img.width; ++c)
      view(static_cast<py::ssize_t>(r), static_cast<py::ssize_t>(c)) = img.at(r, c);
  return out;
}

cb::BitGrid mask_from_array(const py::array_t<std::uint8_t>& arr) {
  cb::require(arr.ndim() == 2, cb::Errc::Shape, "expected a [H,W] uint8 mask");
  cb::BitGrid mask(static_cast<std::size_t>(arr.shape(0)),
                   static_cast<std::size_t>(arr.shape(1)));
  const auto view = arr.unchecked<2>();
  for (std::size_t r = 0; r < mask.height; ++r)
    for (std::size_t c = 0; c < mask.width; ++c)
      mask.at(r, c) =
          view(static_cast<py::ssize_t>(r), static_cast<py::ssize_t>(c)) ? 1 : 0;
  return mask;
}

py::array_t<std::uint8_t> mask_to_array(const cb::BitGrid& mask) {
  py::array_t<std::uint8_t> out({mask.height, mask.width});
  auto view = out.mutable_unchecked<2>();
  for (std::size_t r = 0; r < mask.height; ++r)
    for (std::size_t c = 0; c < mask.width; ++c)
      view(static_cast<py::ssize_t>(r), static_cast<py::ssize_t>(c)) = mask.at(r, c);
  return out;
}

cb::data::PhantomMode parse_mode(const std::string& mode) {
  if (mode == "signal_in_lung") return cb::data::PhantomMode::SignalInLung;
  if (mode == "signal_out_lung") return cb::data::PhantomMode::SignalOutLung;
  if (mode == "mixed") return cb::data::PhantomMode::Mixed;
  cb::throw_error(cb::Errc::Validation, "unknown phantom mode " + mode);
}

cb::data::ClassMode parse_class_mode(const std::string& mode) {
  if (mode == "two_class") return cb::data::ClassMode::TwoClass;
  if (mode == "four_class") return cb::data::ClassMode::FourClass;
  cb::throw_error(cb::Errc::Validation, "unknown class mode " + mode);
}

py::dict row_to_dict(const cb::cli::ResultsRow& row) {
  py::dict out;
  out["run_id"] = row.run_id;
  out["pretrain_sequence"] = row.pretrain_sequence;
  out["is_curriculum"] = row.is_curriculum;
  out["val_balanced_acc"] = row.val_balanced_acc;
  out["mean_ail"] = row.mean_ail;
  out["wall_clock_s"] = row.wall_clock_s;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "curricubench: curricular SSL pretraining and attention audits";

  py::register_exception<cb::Error>(m, "CurricubenchError");

  m.def(
      "gen_phantom",
      [](std::size_t n_samples, std::size_t side, const std::string& mode,
         double noise_sigma, std::uint64_t seed) {
        cb::data::PhantomConfig cfg;
        cfg.n_samples = n_samples;
        cfg.side = side;
        cfg.mode = parse_mode(mode);
        cfg.noise_sigma = noise_sigma;
        cfg.seed = seed;
        const auto phantom = cb::data::gen_phantom(cfg);
        const std::size_t n = phantom.dataset.size();
        py::array_t<std::uint8_t> images({n, side, side});
        py::array_t<std::uint8_t> masks({n, side, side});
        auto iv = images.mutable_unchecked<3>();
        auto mv = masks.mutable_unchecked<3>();
        py::list labels, ids;
        for (std::size_t i = 0; i < n; ++i) {
          const auto& sample = phantom.dataset.samples[i];
          const auto& mask = phantom.masks.at(sample.id);
          for (std::size_t r = 0; r < side; ++r)
            for (std::size_t c = 0; c < side; ++c) {
              iv(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(r),
                 static_cast<py::ssize_t>(c)) = sample.pixels.at(r, c);
              mv(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(r),
                 static_cast<py::ssize_t>(c)) = mask.at(r, c);
            }
          labels.append(cb::data::label_name(*sample.label));
          ids.append(sample.id);
        }
        py::dict out;
        out["images"] = images;
        out["labels"] = labels;
        out["ids"] = ids;
        out["masks"] = masks;
        return out;
      },
      py::arg("n_samples"), py::arg("side") = 64, py::arg("mode") = "signal_in_lung",
      py::arg("noise_sigma") = 6.0, py::arg("seed") = 0,
      "Generate the synthetic lung phantom with ground-truth masks");

  m.def(
      "sinkhorn",
      [](const py::array_t<double>& scores, double eps, std::size_t iters) {
        cb::require(scores.ndim() == 2, cb::Errc::Shape, "scores must be [B,K]");
        cb::TensorF64 t({static_cast<std::size_t>(scores.shape(0)),
                         static_cast<std::size_t>(scores.shape(1))});
        const auto view = scores.unchecked<2>();
        for (py::ssize_t i = 0; i < scores.shape(0); ++i)
          for (py::ssize_t j = 0; j < scores.shape(1); ++j)
            t.at2(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = view(i, j);
        const cb::TensorF64 q = cb::nn::sinkhorn(t, eps, iters);
        py::array_t<double> out({q.dim(0), q.dim(1)});
        auto ov = out.mutable_unchecked<2>();
        for (std::size_t i = 0; i < q.dim(0); ++i)
          for (std::size_t j = 0; j < q.dim(1); ++j)
            ov(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(j)) = q.at2(i, j);
        return out;
      },
      py::arg("scores"), py::arg("eps") = 0.05, py::arg("iters") = 3,
      "Sinkhorn-Knopp equipartition assignment (row sums 1/B, column sums 1/K)");

  m.def(
      "ail",
      [](const py::array_t<double>& attention, const py::array_t<std::uint8_t>& mask) {
        cb::require(attention.ndim() == 2, cb::Errc::Shape, "attention must be [H,W]");
        cb::Tensor a({static_cast<std::size_t>(attention.shape(0)),
                      static_cast<std::size_t>(attention.shape(1))});
        const auto view = attention.unchecked<2>();
        for (py::ssize_t i = 0; i < attention.shape(0); ++i)
          for (py::ssize_t j = 0; j < attention.shape(1); ++j)
            a.at2(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
                static_cast<float>(view(i, j));
        return cb::attention::ail(a, mask_from_array(mask));
      },
      py::arg("attention"), py::arg("mask"),
      "Attention-inside-lungs score: sum(A*M) / sum(A)");

  m.def(
      "postprocess_mask",
      [](const py::array_t<std::uint8_t>& mask, double min_area_fraction,
         std::size_t closing_radius) {
        cb::attention::PostprocessOptions opts;
        opts.min_area_fraction = min_area_fraction;
        opts.closing_radius = closing_radius;
        return mask_to_array(cb::attention::postprocess_mask(mask_from_array(mask), opts));
      },
      py::arg("mask"), py::arg("min_area_fraction") = 0.01, py::arg("closing_radius") = 2,
      "Keep the up-to-2 largest components, then binary closing");

  m.def(
      "inverse_segment",
      [](const py::array_t<std::uint8_t>& image, const py::array_t<std::uint8_t>& mask) {
        return image_to_array(
            cb::attention::inverse_segment(image_from_array(image), mask_from_array(mask)));
      },
      py::arg("image"), py::arg("mask"), "Zero the lung pixels of an image");

  m.def(
      "rotate90",
      [](const py::array_t<std::uint8_t>& image, int k) {
        return image_to_array(cb::rotate90(image_from_array(image), k));
      },
      py::arg("image"), py::arg("k") = 1, "Exact k*90-degree CCW rotation");

  m.def(
      "balanced_accuracy",
      [](const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels) {
        return cb::classify::balanced_accuracy(preds, labels);
      },
      py::arg("preds"), py::arg("labels"), "Mean of per-class recalls");

  m.def(
      "compute_class_weights",
      [](const std::vector<std::string>& labels, const std::string& mode) {
        std::vector<cb::data::ClassLabel> parsed;
        parsed.reserve(labels.size());
        for (const auto& l : labels) parsed.push_back(cb::data::parse_label(l));
        const auto weights =
            cb::data::compute_class_weights(parsed, parse_class_mode(mode));
        py::dict out;
        for (const auto& [label, w] : weights.weights)
          out[cb::data::label_name(label)] = w;
        return out;
      },
      py::arg("labels"), py::arg("mode") = "two_class",
      "Inverse-ratio class weights, mean-normalized to 1");

  m.def(
      "is_curriculum_order",
      [](const std::vector<std::string>& sequence,
         const std::map<std::string, double>& single_task_acc) {
        return cb::curriculum::is_curriculum_order(sequence, single_task_acc);
      },
      py::arg("sequence"), py::arg("single_task_acc"),
      "True iff single-task accuracies strictly increase along the sequence");

  m.def(
      "init_backbone",
      [](const std::vector<std::size_t>& stage_widths, std::uint64_t seed,
         const std::string& path) {
        cb::nn::BackboneConfig cfg;
        if (!stage_widths.empty()) cfg.stage_widths = stage_widths;
        cb::save_checkpoint(cb::nn::init_backbone(cfg, seed), path);
      },
      py::arg("stage_widths"), py::arg("seed"), py::arg("path"),
      "Write a freshly initialized backbone checkpoint to a directory");

  m.def(
      "compute_cam",
      [](const std::string& checkpoint_dir, const py::array_t<std::uint8_t>& image,
         bool clamp) {
        const cb::Checkpoint model = cb::load_checkpoint(checkpoint_dir);
        cb::attention::CamOptions opts;
        opts.clamp_negative = clamp;
        const cb::Tensor cam =
            cb::attention::compute_cam(model, image_from_array(image), opts);
        py::array_t<float> out({cam.dim(0), cam.dim(1)});
        auto view = out.mutable_unchecked<2>();
        for (std::size_t r = 0; r < cam.dim(0); ++r)
          for (std::size_t c = 0; c < cam.dim(1); ++c)
            view(static_cast<py::ssize_t>(r), static_cast<py::ssize_t>(c)) = cam.at2(r, c);
        return out;
      },
      py::arg("checkpoint_dir"), py::arg("image"), py::arg("clamp") = true,
      "CAM of the predicted class at image resolution");

  m.def(
      "run_experiment",
      [](const std::string& manifest_path) {
        return row_to_dict(
            cb::cli::run_experiment(cb::cli::load_experiment_manifest(manifest_path)));
      },
      py::arg("manifest_path"), "Execute a manifest end to end and return the results row");

  m.def(
      "run_confound",
      [](const std::string& manifest_path) {
        const auto result =
            cb::cli::run_confound(cb::cli::load_experiment_manifest(manifest_path));
        py::dict out;
        out["masked"] = row_to_dict(result.masked);
        out["inverse"] = row_to_dict(result.inverse);
        return out;
      },
      py::arg("manifest_path"),
      "Train lung-only and inverse-segmented baselines from a manifest");
}
