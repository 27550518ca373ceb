#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "matrn/checkpoint.hpp"
#include "matrn/train.hpp"

namespace py = pybind11;
using namespace matrn;

namespace {

Tensor<float> tensor_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  Shape shape;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(static_cast<int>(a.shape(i)));
  Tensor<float> t = Tensor<float>::zeros(shape);
  std::memcpy(t.ptr(), a.data(), static_cast<size_t>(a.size()) * sizeof(float));
  return t;
}

py::array_t<float> array_from_tensor(const Tensor<float>& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<float> a(shape);
  std::memcpy(a.mutable_data(), t.ptr(), static_cast<size_t>(t.size()) * sizeof(float));
  return a;
}

/// Thin inference wrapper: config text -> model, checkpoint load, batched
/// greedy recognition of [B, C, H, W] float images.
class Recognizer {
 public:
  explicit Recognizer(const std::string& config_text)
      : cfg_(config_from_string(config_text)), model_(cfg_) {}

  void load(const std::string& checkpoint_path) {
    auto ckpt = load_checkpoint<float>(checkpoint_path);
    apply_checkpoint(ckpt, model_.params());
  }

  int64_t parameter_count() const { return model_.parameter_count(); }

  std::vector<std::string> recognize(
      const py::array_t<float, py::array::c_style | py::array::forcecast>& images) {
    if (images.ndim() != 4) throw DimensionError("recognize: images must be [B, C, H, W]");
    Tensor<float> x = tensor_from_array(images);
    std::mt19937 rng(0);
    std::vector<int> lengths(static_cast<size_t>(x.dim(0)), 1);
    auto res = model_.forward(x, lengths, false, rng);
    return greedy_decode(res.final_logits());
  }

 private:
  TrainConfig cfg_;
  Matrn<float> model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "scene-text recognizer core: rendering, charset codecs, tensor ops, inference";

  m.attr("NUM_CLASSES") = Charset::kNumClasses;
  m.attr("PAD_INDEX") = Charset::kPadIndex;

  m.def(
      "encode_label",
      [](const std::string& label, int t_max) {
        TokenSequence seq = encode_label(label, t_max);
        return py::make_tuple(seq.indices, seq.true_length);
      },
      py::arg("label"), py::arg("t_max"),
      "Pad-filled class-index sequence and the true length of the label.");

  m.def("decode_indices", &decode_indices, py::arg("indices"),
        "String for an index sequence; decoding stops at the first pad.");

  m.def(
      "render_word",
      [](const std::string& text, uint64_t seed) {
        ImageSample img = render_word(text, seed);
        py::array_t<float> a({img.h, img.w, img.c});
        std::memcpy(a.mutable_data(), img.pixels.data(), img.pixels.size() * sizeof(float));
        return a;
      },
      py::arg("text"), py::arg("seed"),
      "Deterministic synthetic word image as an [H, W, C] float array in [0, 1].");

  m.def(
      "softmax",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& x) {
        return array_from_tensor(softmax(tensor_from_array(x), -1));
      },
      py::arg("x"), "Row-stochastic softmax over the last axis.");

  m.def(
      "matmul",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& b) {
        if (a.ndim() != 2 || b.ndim() != 2) throw DimensionError("matmul: need 2-D operands");
        return array_from_tensor(matmul(tensor_from_array(a), tensor_from_array(b)));
      },
      py::arg("a"), py::arg("b"), "2-D matrix product via the BLAS-backed tensor op.");

  m.def(
      "parameter_count",
      [](const std::string& config_text) {
        return Matrn<float>(config_from_string(config_text)).parameter_count();
      },
      py::arg("config_text"), "Trainable parameter count of the model a config builds.");

  m.def("word_accuracy", &word_accuracy, py::arg("predictions"), py::arg("labels"),
        "Case-insensitive exact-match rate between predictions and labels.");

  py::class_<Recognizer>(m, "Recognizer")
      .def(py::init<const std::string&>(), py::arg("config_text"))
      .def("load", &Recognizer::load, py::arg("checkpoint_path"))
      .def_property_readonly("parameter_count", &Recognizer::parameter_count)
      .def("recognize", &Recognizer::recognize, py::arg("images"),
           "Greedy-decoded strings for a [B, C, H, W] float image batch.");

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_ValueError);
  py::register_exception<LabelError>(m, "LabelError", PyExc_ValueError);
  py::register_exception<CharsetError>(m, "CharsetError", PyExc_ValueError);
}
