#include "mmb/config.hpp"

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

namespace mmb {

using ordered_json = nlohmann::ordered_json;

void DataSpec::validate() const {
  const int sources = (!task_files.empty() ? 1 : 0) +
                      (!single_file.empty() ? 1 : 0) + (generate ? 1 : 0);
  if (sources != 1)
    throw std::invalid_argument(
        "data: set exactly one of task_files, single_file, generate");
  if (generate) {
    if (gen_tasks <= 0 || gen_n < 2 || gen_dim <= 0)
      throw std::invalid_argument("data.generate: bad sizes");
    if (gen_pos_frac <= 0.0 || gen_pos_frac >= 1.0)
      throw std::invalid_argument("data.generate: pos_frac must be in (0,1)");
    if (gen_margin <= 0.0)
      throw std::invalid_argument("data.generate: margin must be positive");
  }
}

bool ExperimentConfig::is_synthetic() const {
  return kind == "synthetic-v1" || kind == "synthetic-v2";
}

void ExperimentConfig::validate() const {
  if (kind != "synthetic-v1" && kind != "synthetic-v2" && kind != "auc-ct" &&
      kind != "pauc")
    throw std::invalid_argument(
        "kind must be one of synthetic-v1, synthetic-v2, auc-ct, pauc");
  run.validate();
  if (record_every < 1)
    throw std::invalid_argument("record_every must be >= 1");
  if (threshold <= 0.0) throw std::invalid_argument("threshold must be positive");
  if (out_dir.empty()) throw std::invalid_argument("out_dir must be nonempty");
  if (is_synthetic()) {
    dims.validate();
    profile.validate();
    if (curvature_floor <= 0.0)
      throw std::invalid_argument("problem.curvature_floor must be positive");
  } else {
    data.validate();
    model.validate();
    if (kind == "pauc") pauc.validate();
  }
  if (sweep.block_batch.empty() || sweep.data_batch.empty() ||
      sweep.seeds.empty())
    throw std::invalid_argument("sweep axes must be nonempty");
  for (int b : sweep.block_batch)
    if (b < 1) throw std::invalid_argument("sweep.block_batch entries must be >= 1");
  for (int b : sweep.data_batch)
    if (b < 1) throw std::invalid_argument("sweep.data_batch entries must be >= 1");
}

namespace {

void check_keys(const ordered_json& j, const std::string& path,
                const std::set<std::string>& allowed) {
  if (!j.is_object())
    throw std::invalid_argument(path + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key))
      throw std::invalid_argument("unknown key " + path + "." + key);
  }
}

template <typename T>
void take(const ordered_json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_string(const std::string& text) {
  const ordered_json j = ordered_json::parse(text);
  ExperimentConfig c;
  if (!j.is_object() || !j.contains("kind"))
    throw std::invalid_argument("config: missing required key kind");
  c.kind = j.at("kind").get<std::string>();
  const bool synth = c.kind == "synthetic-v1" || c.kind == "synthetic-v2";
  const bool is_pauc = c.kind == "pauc";
  if (!synth && c.kind != "auc-ct" && !is_pauc)
    throw std::invalid_argument(
        "kind must be one of synthetic-v1, synthetic-v2, auc-ct, pauc");

  std::set<std::string> top = {"kind", "run", "record_every", "threshold",
                               "out_dir", "sweep"};
  if (synth)
    top.insert("problem");
  else {
    top.insert("data");
    top.insert("model");
    if (is_pauc) top.insert("pauc");
  }
  check_keys(j, "config", top);

  if (synth && j.contains("problem")) {
    const auto& p = j.at("problem");
    check_keys(p, "problem",
               {"seed", "blocks", "d_x", "d_y", "d_alpha", "mu_f", "mu_g",
                "L_f", "L_g", "C_f", "C_gxy", "sigma", "curvature_floor"});
    take(p, "seed", c.problem_seed);
    take(p, "blocks", c.dims.blocks);
    take(p, "d_x", c.dims.d_x);
    take(p, "d_y", c.dims.d_y);
    take(p, "d_alpha", c.dims.d_alpha);
    take(p, "mu_f", c.profile.mu_f);
    take(p, "mu_g", c.profile.mu_g);
    take(p, "L_f", c.profile.L_f);
    take(p, "L_g", c.profile.L_g);
    take(p, "C_f", c.profile.C_f);
    take(p, "C_gxy", c.profile.C_gxy);
    take(p, "sigma", c.profile.sigma);
    take(p, "curvature_floor", c.curvature_floor);
  }
  if (!synth) {
    if (!j.contains("data"))
      throw std::invalid_argument("config: application kinds need a data section");
    const auto& d = j.at("data");
    check_keys(d, "data", {"task_files", "single_file", "generate"});
    take(d, "task_files", c.data.task_files);
    take(d, "single_file", c.data.single_file);
    if (d.contains("generate")) {
      const auto& g = d.at("generate");
      check_keys(g, "data.generate",
                 {"seed", "tasks", "n", "dim", "pos_frac", "margin"});
      c.data.generate = true;
      take(g, "seed", c.data.gen_seed);
      take(g, "tasks", c.data.gen_tasks);
      take(g, "n", c.data.gen_n);
      take(g, "dim", c.data.gen_dim);
      take(g, "pos_frac", c.data.gen_pos_frac);
      take(g, "margin", c.data.gen_margin);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      check_keys(m, "model",
                 {"encoder_dim", "margin", "eta_tilde", "exact_ce_hvp",
                  "init_scale"});
      take(m, "encoder_dim", c.model.encoder_dim);
      take(m, "margin", c.model.margin);
      take(m, "eta_tilde", c.model.eta_tilde);
      take(m, "exact_ce_hvp", c.model.exact_ce_hvp);
      take(m, "init_scale", c.model.init_scale);
    }
    if (is_pauc && j.contains("pauc")) {
      const auto& p = j.at("pauc");
      check_keys(p, "pauc",
                 {"rho", "tau1", "tau2", "epsilon_smooth", "margin",
                  "practical_mode"});
      take(p, "rho", c.pauc.rho);
      take(p, "tau1", c.pauc.tau1);
      take(p, "tau2", c.pauc.tau2);
      take(p, "epsilon_smooth", c.pauc.epsilon_smooth);
      take(p, "margin", c.pauc.margin);
      take(p, "practical_mode", c.pauc.practical_mode);
    }
  }
  if (j.contains("run")) {
    const auto& r = j.at("run");
    check_keys(r, "run",
               {"eta0", "eta1", "eta2", "eta3", "beta0", "beta1", "block_batch",
                "data_batch", "horizon", "seed", "gamma_radius",
                "independent_product_batches"});
    take(r, "eta0", c.run.eta0);
    take(r, "eta1", c.run.eta1);
    take(r, "eta2", c.run.eta2);
    take(r, "eta3", c.run.eta3);
    take(r, "beta0", c.run.beta0);
    take(r, "beta1", c.run.beta1);
    take(r, "block_batch", c.run.block_batch);
    take(r, "data_batch", c.run.data_batch);
    take(r, "horizon", c.run.horizon);
    take(r, "seed", c.run.seed);
    take(r, "gamma_radius", c.run.gamma_radius);
    take(r, "independent_product_batches", c.run.independent_product_batches);
  }
  take(j, "record_every", c.record_every);
  take(j, "threshold", c.threshold);
  take(j, "out_dir", c.out_dir);

  c.sweep.block_batch = {c.run.block_batch};
  c.sweep.data_batch = {c.run.data_batch};
  c.sweep.seeds = {1, 2, 3, 4, 5};
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    check_keys(s, "sweep", {"block_batch", "data_batch", "seeds"});
    take(s, "block_batch", c.sweep.block_batch);
    take(s, "data_batch", c.sweep.data_batch);
    take(s, "seeds", c.sweep.seeds);
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_string(buf.str());
}

std::string ExperimentConfig::to_json() const {
  ordered_json j;
  j["kind"] = kind;
  if (is_synthetic()) {
    ordered_json p;
    p["seed"] = problem_seed;
    p["blocks"] = dims.blocks;
    p["d_x"] = dims.d_x;
    p["d_y"] = dims.d_y;
    p["d_alpha"] = dims.d_alpha;
    p["mu_f"] = profile.mu_f;
    p["mu_g"] = profile.mu_g;
    p["L_f"] = profile.L_f;
    p["L_g"] = profile.L_g;
    p["C_f"] = profile.C_f;
    p["C_gxy"] = profile.C_gxy;
    p["sigma"] = profile.sigma;
    p["curvature_floor"] = curvature_floor;
    j["problem"] = std::move(p);
  } else {
    ordered_json d;
    if (!data.task_files.empty()) d["task_files"] = data.task_files;
    if (!data.single_file.empty()) d["single_file"] = data.single_file;
    if (data.generate) {
      ordered_json g;
      g["seed"] = data.gen_seed;
      g["tasks"] = data.gen_tasks;
      g["n"] = data.gen_n;
      g["dim"] = data.gen_dim;
      g["pos_frac"] = data.gen_pos_frac;
      g["margin"] = data.gen_margin;
      d["generate"] = std::move(g);
    }
    j["data"] = std::move(d);
    ordered_json m;
    m["encoder_dim"] = model.encoder_dim;
    m["margin"] = model.margin;
    m["eta_tilde"] = model.eta_tilde;
    m["exact_ce_hvp"] = model.exact_ce_hvp;
    m["init_scale"] = model.init_scale;
    j["model"] = std::move(m);
    if (kind == "pauc") {
      ordered_json p;
      p["rho"] = pauc.rho;
      p["tau1"] = pauc.tau1;
      p["tau2"] = pauc.tau2;
      p["epsilon_smooth"] = pauc.epsilon_smooth;
      p["margin"] = pauc.margin;
      p["practical_mode"] = pauc.practical_mode;
      j["pauc"] = std::move(p);
    }
  }
  ordered_json r;
  r["eta0"] = run.eta0;
  r["eta1"] = run.eta1;
  r["eta2"] = run.eta2;
  r["eta3"] = run.eta3;
  r["beta0"] = run.beta0;
  r["beta1"] = run.beta1;
  r["block_batch"] = run.block_batch;
  r["data_batch"] = run.data_batch;
  r["horizon"] = run.horizon;
  r["seed"] = run.seed;
  r["gamma_radius"] = run.gamma_radius;
  r["independent_product_batches"] = run.independent_product_batches;
  j["run"] = std::move(r);
  j["record_every"] = record_every;
  j["threshold"] = threshold;
  j["out_dir"] = out_dir;
  ordered_json s;
  s["block_batch"] = sweep.block_batch;
  s["data_batch"] = sweep.data_batch;
  s["seeds"] = sweep.seeds;
  j["sweep"] = std::move(s);
  return j.dump(2) + "\n";
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::string ExperimentConfig::fingerprint() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(to_json())));
  return std::string(buf);
}

}  // namespace mmb
