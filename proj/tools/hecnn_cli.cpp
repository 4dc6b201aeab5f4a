// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "hecnn/ckks/context.hpp"
#include "hecnn/ckks/serialize.hpp"
#include "hecnn/data.hpp"
#include "hecnn/engine.hpp"
#include "hecnn/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hecnn;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  out << text;
}

ckks::SecurityProfile parse_profile(const std::string& s) {
  if (s == "paper") return ckks::SecurityProfile::paper;
  if (s == "test-insecure") return ckks::SecurityProfile::test_insecure;
  throw Error(ErrorCode::invalid_argument, "unknown profile '" + s + "'");
}

polyfit::Polynomial read_activation_file(const fs::path& path) {
  const json j = json::parse(read_text(path));
  return {j.at("coeffs").get<std::vector<double>>()};
}

// Keys ------------------------------------------------------------------------------

void save_keys(const fs::path& dir, const ckks::CkksParams& params, const ckks::KeySet& keys) {
  fs::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + (dir / name).string());
    return out;
  };
  auto sk = open("secret.key");
  ckks::save(sk, keys.secret);
  auto pk = open("public.key");
  ckks::save(pk, keys.pub);
  auto rk = open("relin.key");
  ckks::save(rk, keys.relin);
  const json meta{{"preset", params.name},
                  {"profile", ckks::to_string(params.security_profile)},
                  {"ring_degree", params.ring_degree},
                  {"level", params.level()},
                  {"log_q", params.log_q()},
                  {"params_hash", params.hash()}};
  write_text(dir / "params.json", meta.dump(1) + "\n");
}

ckks::KeySet load_keys(const fs::path& dir, const ckks::CkksContext& ctx) {
  auto open = [&](const char* name) {
    std::ifstream in(dir / name, std::ios::binary);
    if (!in) throw Error(ErrorCode::io_error, "cannot open " + (dir / name).string());
    return in;
  };
  ckks::KeySet keys;
  auto sk = open("secret.key");
  keys.secret = ckks::load_secret_key(sk, ctx);
  auto pk = open("public.key");
  keys.pub = ckks::load_public_key(pk, ctx);
  auto rk = open("relin.key");
  keys.relin = ckks::load_relin_key(rk, ctx);
  return keys;
}

// Shared inference plumbing -----------------------------------------------------------

struct BackendConfig {
  std::string backend = "sim";
  std::string preset = "mnist-deg4";
  std::string profile = "paper";
  std::string keys;
  std::uint64_t seed = 1;
  int threads = 1;
};

void add_backend_options(CLI::App* cmd, BackendConfig& c) {
  cmd->add_option("--backend", c.backend, "ckks or sim")
      ->envname("HECNN_BACKEND")
      ->check(CLI::IsMember({"ckks", "sim"}))
      ->capture_default_str();
  cmd->add_option("--preset", c.preset, "parameter preset")->envname("HECNN_PRESET")->capture_default_str();
  cmd->add_option("--profile", c.profile, "paper or test-insecure")
      ->envname("HECNN_PROFILE")
      ->check(CLI::IsMember({"paper", "test-insecure"}))
      ->capture_default_str();
  cmd->add_option("--keys", c.keys, "key directory from keygen")->envname("HECNN_KEYS");
  cmd->add_option("--seed", c.seed, "randomness seed")->envname("HECNN_SEED")->capture_default_str();
  cmd->add_option("--threads", c.threads, "worker threads")
      ->envname("HECNN_THREADS")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

std::unique_ptr<EvalBackend> make_backend(const BackendConfig& c, bool require_keys) {
  const auto params = ckks::preset(c.preset, parse_profile(c.profile));
  if (c.backend == "sim") return std::make_unique<SimBackend>(params);
  const auto ctx = ckks::CkksContext::create(params);
  std::shared_ptr<const ckks::KeySet> keys;
  if (!c.keys.empty()) {
    keys = std::make_shared<const ckks::KeySet>(load_keys(c.keys, *ctx));
  } else if (require_keys) {
    throw Error(ErrorCode::invalid_argument, "--backend ckks requires --keys");
  } else {
    keys = std::make_shared<const ckks::KeySet>(ckks::keygen(*ctx, c.seed));
  }
  return std::make_unique<CkksBackend>(ctx, keys, c.seed ^ 0x9e3779b97f4a7c15ULL);
}

void check_budget(const model::ModelGraph& g, const ckks::CkksParams& params) {
  const auto plan = model::plan_levels(g);
  if (plan.total > params.level()) {
    throw Error(ErrorCode::budget_exceeded, "plan needs " + std::to_string(plan.total) + " levels but preset '" +
                                                params.name + "' has level " + std::to_string(params.level()));
  }
}

json layer_reports(const engine::InferenceResult& r) {
  json layers = json::array();
  for (const auto& l : r.layers) {
    layers.push_back({{"layer", l.layer},
                      {"type", l.type},
                      {"planned", l.planned},
                      {"consumed", l.consumed},
                      {"level_after", l.level_after},
                      {"seconds", l.seconds}});
  }
  return layers;
}

void print_layers(const engine::InferenceResult& r) {
  std::cout << std::left << std::setw(7) << "layer" << std::setw(12) << "type" << std::setw(9) << "planned"
            << std::setw(10) << "consumed" << std::setw(7) << "level" << "seconds\n";
  for (const auto& l : r.layers) {
    std::cout << std::setw(7) << l.layer << std::setw(12) << l.type << std::setw(9) << l.planned << std::setw(10)
              << l.consumed << std::setw(7) << l.level_after << std::fixed << std::setprecision(3) << l.seconds
              << "\n";
  }
  std::cout.unsetf(std::ios::floatfield);
}

// Subcommands ---------------------------------------------------------------------

struct FitArgs {
  std::string activation = "swish";
  int degree = 4;
  double lo = -4.0, hi = 4.0;
  int samples = 1001;
  std::string out;
};

int cmd_fit(const FitArgs& a) {
  const polyfit::FitSpec spec{polyfit::parse_activation_kind(a.activation), a.degree, a.lo, a.hi, a.samples};
  const auto p = polyfit::fit_polynomial(spec);
  const json j{{"activation", a.activation},
               {"degree", a.degree},
               {"range", {a.lo, a.hi}},
               {"samples", a.samples},
               {"coeffs", p.coeffs},
               {"max_error", polyfit::max_fit_error(p, spec)}};
  if (a.out.empty()) {
    std::cout << j.dump(1) << "\n";
  } else {
    write_text(a.out, j.dump(1) + "\n");
    std::cout << "wrote " << a.out << "\n";
  }
  return 0;
}

struct PresetArgs {
  std::string arch = "mnist";
  std::string activation_file;
  bool no_batchnorm = false;
  std::uint64_t seed = 1;
  int calibration = 64;
  std::string out;
};

int cmd_preset(const PresetArgs& a) {
  model::PresetOptions o;
  o.arch = a.arch == "cifar" ? model::Architecture::cifar : model::Architecture::mnist;
  if (!a.activation_file.empty()) o.activation = read_activation_file(a.activation_file);
  o.batchnorm = !a.no_batchnorm;
  o.seed = a.seed;
  o.calibration_images = a.calibration;
  write_text(a.out, model::save_model(model::make_preset(o)) + "\n");
  std::cout << "wrote " << a.out << "\n";
  return 0;
}

struct OptimizeArgs {
  std::string model, activation_file, out, plan;
};

int cmd_optimize(const OptimizeArgs& a) {
  auto g = model::load_model(read_text(a.model));
  if (!a.activation_file.empty()) {
    const auto poly = read_activation_file(a.activation_file);
    for (auto& layer : g.layers) {
      if (auto* act = std::get_if<model::Activation>(&layer)) *act = {poly, 1.0};
    }
  }
  const auto o = model::optimize(g);
  const auto plan = model::plan_levels(o);
  write_text(a.out, model::save_model(o) + "\n");
  if (!a.plan.empty()) write_text(a.plan, model::plan_to_json(plan) + "\n");
  std::cout << "optimized " << g.layers.size() << " -> " << o.layers.size() << " layers, level plan " << plan.total
            << "\n";
  return 0;
}

struct KeygenArgs {
  std::string preset = "mnist-deg4", profile = "paper", out;
  std::uint64_t seed = 1;
};

int cmd_keygen(const KeygenArgs& a) {
  const auto params = ckks::preset(a.preset, parse_profile(a.profile));
  const auto ctx = ckks::CkksContext::create(params);
  save_keys(a.out, params, ckks::keygen(*ctx, a.seed));
  std::cout << "wrote keys for " << params.name << " (N=" << params.ring_degree << ", L=" << params.level()
            << ", log Q=" << std::lround(params.log_q()) << ") to " << a.out << "\n";
  return 0;
}

struct InferArgs {
  BackendConfig backend;
  std::string model, input, labels, out, ledger;
};

int cmd_infer(const InferArgs& a) {
  const auto g = model::load_model(read_text(a.model));
  check_budget(g, ckks::preset(a.backend.preset, parse_profile(a.backend.profile)));
  std::size_t count = 0, per = 0;
  const auto images = data::read_batch(a.input, count, per);
  if (per != g.input_shape.size()) throw Error(ErrorCode::shape_mismatch, "input batch does not match model input");
  auto backend = make_backend(a.backend, true);
  const auto r = engine::infer_encrypted(*backend, g, images, count, {a.backend.threads});

  json results = json::object();
  for (std::size_t i = 0; i < count; ++i) {
    results[std::to_string(i)] = {{"logits", r.logits[i]}, {"argmax", r.predictions[i]}};
  }
  json doc{{"backend", a.backend.backend},
           {"preset", backend->params().name},
           {"results", results},
           {"levels", layer_reports(r)},
           {"plan_total", r.plan.total},
           {"plan_matches", r.plan_matches()},
           {"total_seconds", r.total_seconds},
           {"per_image_seconds", r.per_image_seconds},
           {"peak_ciphertexts", r.peak_ciphertexts}};
  if (!a.labels.empty()) {
    const auto labels = json::parse(read_text(a.labels)).get<std::vector<int>>();
    if (labels.size() != count) throw Error(ErrorCode::shape_mismatch, "label count does not match batch");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < count; ++i) correct += static_cast<int>(r.predictions[i]) == labels[i];
    doc["accuracy"] = static_cast<double>(correct) / static_cast<double>(count);
  }
  write_text(a.out, doc.dump(1) + "\n");
  if (!a.ledger.empty()) write_text(a.ledger, backend->ledger().to_jsonl());

  print_layers(r);
  std::cout << "images: " << count << "\n"
            << "total time: " << r.total_seconds << " s\n"
            << "per image: " << r.per_image_seconds * 1e3 << " ms\n"
            << "peak ciphertexts: " << r.peak_ciphertexts << "\n";
  if (doc.contains("accuracy")) std::cout << "accuracy: " << doc["accuracy"].get<double>() * 100.0 << " %\n";
  return r.plan_matches() ? 0 : 1;
}

struct VerifyArgs {
  BackendConfig backend;
  std::string model, input, report;
  int n_inputs = 100;
  double tolerance = 1e-2;
  double min_agreement = 0.99;
};

int cmd_verify(const VerifyArgs& a) {
  const auto g = model::load_model(read_text(a.model));
  const auto params = ckks::preset(a.backend.preset, parse_profile(a.backend.profile));
  json report{{"model", a.model}, {"preset", params.name}, {"backend", a.backend.backend}};
  try {
    check_budget(g, params);
  } catch (const Error& e) {
    report["passed"] = false;
    report["error"] = e.what();
    if (!a.report.empty()) write_text(a.report, report.dump(1) + "\n");
    std::cerr << "refused: " << e.what() << "\n";
    return 2;
  }

  std::vector<double> images;
  std::size_t count = 0;
  if (!a.input.empty()) {
    std::size_t per = 0;
    images = data::read_batch(a.input, count, per);
    if (per != g.input_shape.size()) throw Error(ErrorCode::shape_mismatch, "input batch does not match model input");
  } else {
    count = static_cast<std::size_t>(a.n_inputs);
    std::mt19937_64 rng(a.backend.seed);
    std::uniform_real_distribution<double> pixel(0.0, 1.0);
    images.resize(count * g.input_shape.size());
    for (auto& v : images) v = static_cast<float>(pixel(rng));
  }
  const auto plain = model::plain_infer_batch(g, images, count);

  auto compare = [&](const engine::InferenceResult& r, const EvalBackend& be, double tol) {
    double worst = 0.0;
    std::size_t agree = 0;
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t k = 0; k < plain[i].size(); ++k) worst = std::max(worst, std::abs(plain[i][k] - r.logits[i][k]));
      agree += r.predictions[i] == model::argmax(plain[i]);
    }
    const double rate = static_cast<double>(agree) / static_cast<double>(count);
    const bool ledger_ok = be.ledger().consumption() == r.plan.total && r.plan_matches();
    const bool ok = worst <= tol && rate >= a.min_agreement && ledger_ok;
    return json{{"max_abs_error", worst},  {"tolerance", tol},         {"argmax_agreement", rate},
                {"ledger_matches_plan", ledger_ok}, {"levels", layer_reports(r)}, {"total_seconds", r.total_seconds},
                {"per_image_seconds", r.per_image_seconds}, {"passed", ok}};
  };

  BackendConfig sim_cfg = a.backend;
  sim_cfg.backend = "sim";
  auto sim = make_backend(sim_cfg, false);
  const auto rs = engine::infer_encrypted(*sim, g, images, count, {a.backend.threads});
  report["sim"] = compare(rs, *sim, 0.0);
  bool passed = report["sim"]["passed"].get<bool>();
  if (a.backend.backend == "ckks") {
    auto ck = make_backend(a.backend, false);
    const auto rc = engine::infer_encrypted(*ck, g, images, count, {a.backend.threads});
    report["ckks"] = compare(rc, *ck, a.tolerance);
    passed = passed && report["ckks"]["passed"].get<bool>();
  }
  report["inputs"] = count;
  report["plan_total"] = model::plan_levels(g).total;
  report["passed"] = passed;
  if (!a.report.empty()) write_text(a.report, report.dump(1) + "\n");

  for (const char* key : {"sim", "ckks"}) {
    if (!report.contains(key)) continue;
    const auto& s = report[key];
    std::cout << key << ": max |error| " << s["max_abs_error"].get<double>() << ", argmax agreement "
              << s["argmax_agreement"].get<double>() * 100.0 << " %, ledger "
              << (s["ledger_matches_plan"].get<bool>() ? "matches" : "DIFFERS from") << " plan -> "
              << (s["passed"].get<bool>() ? "PASS" : "FAIL") << "\n";
  }
  return passed ? 0 : 1;
}

struct ReportArgs {
  std::string ledger, plan;
};

int cmd_report(const ReportArgs& a) {
  const auto plan = model::plan_from_json(read_text(a.plan));
  std::map<std::size_t, std::pair<int, int>> span;  // layer -> (highest before, lowest after)
  std::map<std::size_t, std::size_t> ops;
  std::istringstream lines(read_text(a.ledger));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const json e = json::parse(line);
    const auto op = e.at("op").get<std::string>();
    const auto colon = op.find(':');
    if (colon == std::string::npos) continue;
    const std::size_t layer = std::stoul(op.substr(0, colon));
    const int before = e.at("before").get<int>(), after = e.at("after").get<int>();
    auto [it, fresh] = span.try_emplace(layer, before, after);
    if (!fresh) {
      it->second.first = std::max(it->second.first, before);
      it->second.second = std::min(it->second.second, after);
    }
    ++ops[layer];
  }
  bool ok = true;
  int executed_total = 0;
  std::cout << std::left << std::setw(7) << "layer" << std::setw(12) << "type" << std::setw(9) << "planned"
            << std::setw(10) << "executed" << std::setw(8) << "ops" << "status\n";
  for (const auto& l : plan.per_layer) {
    const auto it = span.find(l.layer);
    const int executed = it == span.end() ? 0 : it->second.first - it->second.second;
    executed_total += executed;
    const bool match = executed == l.levels;
    ok = ok && match;
    std::cout << std::setw(7) << l.layer << std::setw(12) << l.type << std::setw(9) << l.levels << std::setw(10)
              << executed << std::setw(8) << ops[l.layer] << (match ? "ok" : "MISMATCH") << "\n";
  }
  std::cout << "total planned " << plan.total << ", executed " << executed_total << "\n";
  return ok && executed_total == plan.total ? 0 : 1;
}

struct DataArgs {
  std::string mnist_images, mnist_labels, out, labels_out;
  std::vector<std::string> cifar;
  std::size_t count = 0;
};

int cmd_data(const DataArgs& a) {
  data::Dataset d;
  if (!a.cifar.empty()) {
    std::vector<fs::path> paths(a.cifar.begin(), a.cifar.end());
    d = data::load_cifar10_bin(paths);
  } else if (!a.mnist_images.empty() && !a.mnist_labels.empty()) {
    d = data::load_mnist_idx(a.mnist_images, a.mnist_labels);
  } else {
    throw Error(ErrorCode::invalid_argument, "give --mnist-images and --mnist-labels, or --cifar");
  }
  if (a.count > 0) d = d.head(a.count);
  data::write_batch(a.out, d.images, d.count, d.shape.size());
  if (!a.labels_out.empty()) write_text(a.labels_out, json(d.labels).dump() + "\n");
  std::cout << "wrote " << d.count << " images of " << model::to_string(d.shape) << " to " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Leveled CKKS inference for CNNs with polynomial activations"};
  app.require_subcommand(1);

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "least-squares polynomial fit of an activation");
  c_fit->add_option("--activation", fit.activation, "swish, relu, square or identity")->capture_default_str();
  c_fit->add_option("--degree", fit.degree)->capture_default_str();
  c_fit->add_option("--lo", fit.lo)->capture_default_str();
  c_fit->add_option("--hi", fit.hi)->capture_default_str();
  c_fit->add_option("--samples", fit.samples)->capture_default_str();
  c_fit->add_option("--out", fit.out, "output JSON (stdout when omitted)");

  PresetArgs pre;
  auto* c_pre = app.add_subcommand("preset", "random-weight network of a shipped architecture");
  c_pre->add_option("--arch", pre.arch)->check(CLI::IsMember({"mnist", "cifar"}))->capture_default_str();
  c_pre->add_option("--activation-file", pre.activation_file, "fit output; square when omitted");
  c_pre->add_flag("--no-batchnorm", pre.no_batchnorm);
  c_pre->add_option("--seed", pre.seed)->envname("HECNN_SEED")->capture_default_str();
  c_pre->add_option("--calibration", pre.calibration, "random images for BatchNorm statistics")
      ->capture_default_str();
  c_pre->add_option("--out", pre.out)->required();

  OptimizeArgs opt;
  auto* c_opt = app.add_subcommand("optimize", "fuse, fold and clamp a model, then plan its levels");
  c_opt->add_option("--model", opt.model)->required();
  c_opt->add_option("--activation-file", opt.activation_file, "replaces every activation polynomial");
  c_opt->add_option("--out", opt.out)->required();
  c_opt->add_option("--plan", opt.plan, "level plan JSON");

  KeygenArgs kg;
  auto* c_kg = app.add_subcommand("keygen", "generate secret, public and relinearization keys");
  c_kg->add_option("--preset", kg.preset)->envname("HECNN_PRESET")->capture_default_str();
  c_kg->add_option("--profile", kg.profile)
      ->envname("HECNN_PROFILE")
      ->check(CLI::IsMember({"paper", "test-insecure"}))
      ->capture_default_str();
  c_kg->add_option("--seed", kg.seed)->envname("HECNN_SEED")->capture_default_str();
  c_kg->add_option("--out", kg.out)->envname("HECNN_KEYS")->required();

  InferArgs inf;
  auto* c_inf = app.add_subcommand("infer", "encrypted (or simulated) batch inference");
  add_backend_options(c_inf, inf.backend);
  c_inf->add_option("--model", inf.model)->required();
  c_inf->add_option("--input", inf.input, "batch.bin")->required();
  c_inf->add_option("--labels", inf.labels, "JSON label list; reports accuracy");
  c_inf->add_option("--out", inf.out, "logits JSON")->required();
  c_inf->add_option("--ledger", inf.ledger, "level ledger (JSON lines)");

  VerifyArgs ver;
  auto* c_ver = app.add_subcommand("verify", "compare encrypted inference with plaintext inference");
  add_backend_options(c_ver, ver.backend);
  c_ver->add_option("--model", ver.model)->required();
  c_ver->add_option("--input", ver.input, "batch.bin; random inputs when omitted");
  c_ver->add_option("--n-inputs", ver.n_inputs)->check(CLI::PositiveNumber)->capture_default_str();
  c_ver->add_option("--tolerance", ver.tolerance, "max per-logit error for ckks")->capture_default_str();
  c_ver->add_option("--min-agreement", ver.min_agreement)->capture_default_str();
  c_ver->add_option("--report", ver.report, "JSON report");

  ReportArgs rep;
  auto* c_rep = app.add_subcommand("report", "reconcile a level ledger against a plan");
  c_rep->add_option("--ledger", rep.ledger)->required();
  c_rep->add_option("--plan", rep.plan)->required();

  DataArgs dat;
  auto* c_dat = app.add_subcommand("data", "convert MNIST IDX or CIFAR-10 files to batch.bin");
  c_dat->add_option("--mnist-images", dat.mnist_images);
  c_dat->add_option("--mnist-labels", dat.mnist_labels);
  c_dat->add_option("--cifar", dat.cifar, "CIFAR-10 binary batch files");
  c_dat->add_option("--count", dat.count, "keep the first N images");
  c_dat->add_option("--out", dat.out)->required();
  c_dat->add_option("--labels-out", dat.labels_out);

  CLI11_PARSE(app, argc, argv);
  try {
    if (c_fit->parsed()) return cmd_fit(fit);
    if (c_pre->parsed()) return cmd_preset(pre);
    if (c_opt->parsed()) return cmd_optimize(opt);
    if (c_kg->parsed()) return cmd_keygen(kg);
    if (c_inf->parsed()) return cmd_infer(inf);
    if (c_ver->parsed()) return cmd_verify(ver);
    if (c_rep->parsed()) return cmd_report(rep);
    if (c_dat->parsed()) return cmd_data(dat);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
