// Python bindings for the core operations: tensors/autodiff, the world-model
// losses, lambda returns, environments, and the probes.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tpc/behavior.hpp"
#include "tpc/probes.hpp"
#include "tpc/trainer.hpp"

namespace py = pybind11;
using namespace tpc;

namespace {

Tensor tensor_from_numpy(py::array_t<double, py::array::c_style | py::array::forcecast> arr,
                         bool requires_grad) {
  Shape shape(arr.ndim());
  for (py::ssize_t i = 0; i < arr.ndim(); ++i) {
    shape[i] = static_cast<int>(arr.shape(i));
  }
  std::vector<double> values(arr.data(), arr.data() + arr.size());
  return Tensor::from_values(shape, std::move(values), requires_grad);
}

py::array_t<double> numpy_from_span(std::span<const double> v, const Shape& s) {
  std::vector<py::ssize_t> dims(s.begin(), s.end());
  py::array_t<double> out(dims);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

// A self-contained handle bundling the models with their config so python
// callers can exercise the main operations without the training loop.
struct PyAgent {
  TrainConfig cfg;
  Rng init_rng;
  Agent agent;
  Rng loss_rng;

  explicit PyAgent(const py::dict& overrides, uint64_t seed)
      : cfg(make_config(overrides, seed)),
        init_rng(seed),
        agent(cfg, init_rng),
        loss_rng(seed * 31 + 1) {}

  static TrainConfig make_config(const py::dict& overrides, uint64_t seed) {
    Config c;
    for (auto item : overrides) {
      c.apply_override(py::str(item.first).cast<std::string>() + "=" +
                       py::str(item.second).cast<std::string>());
    }
    ConfigValue v;
    v.kind = ConfigValue::Kind::Int;
    v.i = static_cast<int64_t>(seed);
    c.set("seed", v);
    return TrainConfig::from_config(c);
  }

  py::array_t<double> encode(py::array_t<double> obs) {
    NoGradGuard ng;
    Tensor t = tensor_from_numpy(obs, false);
    Tensor s = agent.wm.encode(t);
    return numpy_from_span(s.values(), s.shape());
  }

  py::dict total_loss(py::array_t<double> obs, py::array_t<double> actions,
                      py::array_t<double> rewards) {
    NoGradGuard ng;
    TrajectoryBatch batch;
    batch.obs = tensor_from_numpy(obs, false);
    batch.actions = tensor_from_numpy(actions, false);
    batch.rewards = tensor_from_numpy(rewards, false);
    batch.batch = batch.obs.shape()[0];
    batch.horizon = batch.obs.shape()[1];
    WorldModelLosses l =
        agent.wm.total_loss(batch, cfg.effective_weights(), loss_rng);
    py::dict out;
    out["tpc"] = l.tpc.value();
    out["cons"] = l.cons.value();
    out["spc"] = l.spc.value();
    out["reward"] = l.reward.value();
    out["total"] = l.total.value();
    out["tpc_per_step"] = l.tpc_per_step;
    out["spc_per_step"] = l.spc_per_step;
    out["latent_std"] = l.latent_std;
    return out;
  }
};

struct PyEnv {
  Env env;
  PyEnv(const std::string& task, const std::string& background, int image_size,
        int action_repeat, int episode_length, uint64_t seed)
      : env(make_config(task, background, image_size, action_repeat,
                        episode_length),
            seed) {}

  static EnvConfig make_config(const std::string& task,
                               const std::string& background, int image_size,
                               int action_repeat, int episode_length) {
    EnvConfig c;
    c.task = task_from_string(task);
    c.background.kind = background_kind_from_string(background);
    c.image_size = image_size;
    c.action_repeat = action_repeat;
    c.episode_length = episode_length;
    return c;
  }

  py::array_t<double> reset(uint64_t seed) {
    auto obs = env.reset(seed);
    return numpy_from_span(obs, {env.config().image_size,
                                 env.config().image_size});
  }

  py::tuple step(const std::vector<double>& action) {
    StepResult r = env.step(action);
    return py::make_tuple(
        numpy_from_span(r.obs, {env.config().image_size,
                                env.config().image_size}),
        r.reward, r.done, r.state);
  }
};

}  // namespace

PYBIND11_MODULE(_tpc_core, m) {
  m.doc() = "Temporal-contrastive world model core";

  py::class_<Tensor>(m, "Tensor")
      .def(py::init([](py::array_t<double> arr, bool requires_grad) {
             return tensor_from_numpy(arr, requires_grad);
           }),
           py::arg("values"), py::arg("requires_grad") = false)
      .def_property_readonly("shape", [](const Tensor& t) { return t.shape(); })
      .def("numpy",
           [](const Tensor& t) { return numpy_from_span(t.values(), t.shape()); })
      .def("grad",
           [](const Tensor& t) { return numpy_from_span(t.grad(), t.shape()); })
      .def("backward", [](const Tensor& t) { backward(t); })
      .def("zero_grad", &Tensor::zero_grad)
      .def("value", &Tensor::value);

  m.def(
      "apply",
      [](const std::string& op, const std::vector<Tensor>& inputs,
         std::optional<int> axis, std::optional<Shape> shape, int start,
         int length) {
        OpAttrs attrs;
        attrs.axis = axis;
        if (shape) attrs.shape = *shape;
        attrs.start = start;
        attrs.length = length;
        return apply(op, inputs, attrs);
      },
      py::arg("op"), py::arg("inputs"), py::arg("axis") = std::nullopt,
      py::arg("shape") = std::nullopt, py::arg("start") = 0,
      py::arg("length") = 0,
      "Generic op dispatch over the public vocabulary");
  m.def("op_names", &op_names);

  m.def("infonce", [](py::array_t<double> scores) {
    NoGradGuard ng;
    return infonce(tensor_from_numpy(scores, false)).value();
  });

  m.def(
      "lambda_return",
      [](const std::vector<double>& rewards, const std::vector<double>& values,
         double gamma, double lambda) {
        return lambda_return(rewards, values, gamma, lambda);
      },
      py::arg("rewards"), py::arg("values"), py::arg("gamma") = 0.99,
      py::arg("lambda_") = 0.95);

  m.def("clip_global_norm",
        [](std::vector<py::array_t<double>> grads, double max_norm) {
          std::vector<Tensor> params;
          for (auto& g : grads) {
            Tensor t = tensor_from_numpy(g, true);
            auto raw = t.raw_grad();
            std::copy(t.values().begin(), t.values().end(), raw.begin());
            params.push_back(t);
          }
          double norm = clip_global_norm(params, max_norm);
          std::vector<py::array_t<double>> out;
          for (auto& p : params) {
            out.push_back(numpy_from_span(p.grad(), p.shape()));
          }
          return py::make_tuple(norm, out);
        });

  m.def("mi_oracle_check", [](double a, int batch, int n_batches, uint64_t seed) {
    Rng rng(seed);
    MiOracleResult r = mi_oracle_check(a, batch, n_batches, rng);
    return py::make_tuple(r.closed_form_mi, r.estimate, r.std_err);
  });

  py::class_<PyAgent>(m, "Agent")
      .def(py::init<const py::dict&, uint64_t>(), py::arg("overrides"),
           py::arg("seed") = 1)
      .def("encode", &PyAgent::encode)
      .def("total_loss", &PyAgent::total_loss);

  py::class_<PyEnv>(m, "Env")
      .def(py::init<const std::string&, const std::string&, int, int, int,
                    uint64_t>(),
           py::arg("task") = "pendulum_lite", py::arg("background") = "clean",
           py::arg("image_size") = 16, py::arg("action_repeat") = 2,
           py::arg("episode_length") = 1000, py::arg("seed") = 0)
      .def("reset", &PyEnv::reset)
      .def("step", &PyEnv::step);
}
