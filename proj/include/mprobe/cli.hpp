#pragma once

// Batch front end: problem ingestion, trace generation, probe runs, kernel
// and identity replays, Jacobi tools. Exit codes: 0 ok, 2 input error,
// 3 numerical failure; machine-readable error JSON goes to stderr.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mprobe/io.hpp"
#include "mprobe/kernels.hpp"
#include "mprobe/probe.hpp"

namespace mprobe::cli {

struct RunConfig {
  std::string ray_spec = "neg,rmin=10,rmax=150,n=32";
  double tol_ode = 1e-10;
  double kernel_h = 1.0 / 400.0;
  double floor = kDefaultFloor;
  int jobs = 1;
  std::string out;
};

inline SpectralRay parse_ray_spec(const std::string& spec) {
  SpectralRay ray;
  ray.mode = SpectralRay::Mode::NegativeAxis;
  bool have_mode = false;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "neg") {
      ray.mode = SpectralRay::Mode::NegativeAxis;
      have_mode = true;
      continue;
    }
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw ValidationError("ray: expected neg or key=value, got '" + item + "'");
    const std::string key = item.substr(0, eq);
    double val;
    try {
      val = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw ValidationError("ray: cannot parse value in '" + item + "'");
    }
    if (key == "eps") {
      ray.mode = SpectralRay::Mode::Ray;
      ray.epsilon = val;
      have_mode = true;
    } else if (key == "rmin") {
      ray.r_min = val;
    } else if (key == "rmax") {
      ray.r_max = val;
    } else if (key == "n") {
      ray.count = static_cast<int>(val);
    } else {
      throw ValidationError("ray: unknown key '" + key + "'");
    }
  }
  if (!have_mode) throw ValidationError("ray: specify neg or eps=<radians>");
  ray.check();
  return ray;
}

namespace cli_detail {

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open input file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ValidationError("malformed JSON in '" + path + "': " + e.what());
  }
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open output file '" + path + "'");
  return out;
}

inline std::vector<double> parse_z_list(const std::string& zs) {
  std::vector<double> out;
  std::stringstream ss(zs);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ValidationError("--z: cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw ValidationError("--z: need at least one spectral point");
  return out;
}

}  // namespace cli_detail

inline int cmd_m_eval(const RunConfig& cfg, const std::string& problem_path) {
  const ProblemSpec spec = parse_problem_json(cli_detail::load_json_file(problem_path));
  OdeOptions opt;
  opt.rel_tol = cfg.tol_ode;
  const MTrace tr = make_mtrace(spec, parse_ray_spec(cfg.ray_spec), opt, cfg.jobs);
  auto out = cli_detail::open_output(cfg.out);
  write_mtrace_csv(out, tr);
  return 0;
}

inline int cmd_probe_run(const RunConfig& cfg, const std::string& p1, const std::string& p2) {
  const ProblemSpec s1 = parse_problem_json(cli_detail::load_json_file(p1));
  const ProblemSpec s2 = parse_problem_json(cli_detail::load_json_file(p2));
  OdeOptions opt;
  opt.rel_tol = cfg.tol_ode;
  const auto res = probe_run(s1, s2, parse_ray_spec(cfg.ray_spec), cfg.floor, opt, cfg.jobs);
  auto out = cli_detail::open_output(cfg.out);
  write_agreement_report_json(out, res.report);
  auto diff = cli_detail::open_output(cfg.out + ".diff.csv");
  write_diff_csv(diff, res.trace1, res.diffs);
  return 0;
}

inline int cmd_replay(const RunConfig& cfg, const std::string& p1, const std::string& p2,
                      const std::string& z_list) {
  const ProblemSpec s1 = validate(parse_problem_json(cli_detail::load_json_file(p1)));
  const ProblemSpec s2 = validate(parse_problem_json(cli_detail::load_json_file(p2)));
  if (s1.is_matrix() || s2.is_matrix())
    throw ValidationError("replay: the identity replay is scalar-only");
  const auto zs = cli_detail::parse_z_list(z_list);
  const auto& q1 = s1.scalar_potential();
  const auto& q2 = s2.scalar_potential();
  OdeOptions oopt;
  oopt.rel_tol = cfg.tol_ode;
  KernelOptions kopt;
  const double a = std::max(q1.support_sup(), q2.support_sup());

  auto out = cli_detail::open_output(cfg.out);
  out << "{\n  \"a\": " << fmt17(a) << ",\n  \"kernel_h\": " << fmt17(cfg.kernel_h) << ",\n";
  out << "  \"checks\": [\n";
  double pipeline_sup = 0.0;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    const cplx z(zs[i], 0.0);
    const auto wc = wronskian_identity_check(q1, q2, z, a, oopt);
    const auto pid = product_identity_residual(q1, q2, z, cfg.kernel_h, kopt, oopt);
    const auto pipe = borg_marchenko_pipeline(q1, q2, z, cfg.kernel_h, kopt, oopt);
    pipeline_sup = pipe.pipeline_sup;
    out << "    {\"z\": " << fmt17(zs[i]) << ", \"wronskian_lhs\": [" << fmt17(wc.lhs.real())
        << ", " << fmt17(wc.lhs.imag()) << "], \"wronskian_rhs\": [" << fmt17(wc.rhs.real())
        << ", " << fmt17(wc.rhs.imag()) << "], \"wronskian_residual\": " << fmt17(wc.residual)
        << ", \"product_identity_residual\": " << fmt17(pid.residual)
        << ", \"interchange_residual\": " << fmt17(pipe.interchange_residual) << "}";
    out << (i + 1 < zs.size() ? ",\n" : "\n");
  }
  out << "  ],\n";
  out << "  \"volterra_pipeline_sup\": " << fmt17(pipeline_sup) << "\n}\n";
  return 0;
}

inline int cmd_kernel_compute(const RunConfig& cfg, const std::string& problem_path) {
  const ProblemSpec spec = validate(parse_problem_json(cli_detail::load_json_file(problem_path)));
  if (spec.is_matrix()) throw ValidationError("kernel: matrix kernels are not supported");
  const auto K = transformation_kernel(spec.scalar_potential(), cfg.kernel_h);
  auto out = cli_detail::open_output(cfg.out);
  write_kernel_csv(out, K);
  return 0;
}

inline int cmd_jacobi_order(const RunConfig& cfg, const std::string& j1_path,
                            const std::string& j2_path, int k_max) {
  const JacobiDoc d1 = parse_jacobi_json(cli_detail::load_json_file(j1_path));
  const JacobiDoc d2 = parse_jacobi_json(cli_detail::load_json_file(j2_path));
  if (d1.rational != d2.rational)
    throw ValidationError("jacobi order: both operators must use the same arithmetic");

  auto out = cli_detail::open_output(cfg.out);
  auto emit = [&](const auto& ord, const auto& eq) {
    out << "{\n";
    if (ord.all_compared_equal)
      out << "  \"N\": null,\n  \"note\": \"moments agree through k_max; N >= "
          << (ord.k_max + 2) << "\",\n";
    else
      out << "  \"N\": " << ord.N << ",\n  \"first_mismatch\": " << ord.first_mismatch << ",\n";
    out << "  \"k_max\": " << ord.k_max << ",\n";
    if (!ord.all_compared_equal && ord.N >= 3) {
      const auto depth = jacobi::agreement_depth(ord.N);
      out << "  \"predicted_agreement\": {\"a_upto\": " << depth.a_upto
          << ", \"b_upto\": " << depth.b_upto << "},\n";
    }
    out << "  \"equivalence_ok\": " << (eq.ok ? "true" : "false") << ",\n";
    out << "  \"violations\": [";
    for (std::size_t i = 0; i < eq.violations.size(); ++i)
      out << (i ? ", " : "") << json(eq.violations[i]).dump();
    out << "]\n}\n";
  };
  if (d1.rational) {
    const auto ord = jacobi::decay_order(d1.rat, d2.rat, k_max);
    const auto eq = jacobi::verify_order_equivalence(d1.rat, d2.rat, k_max);
    emit(ord, eq);
  } else {
    const auto ord = jacobi::decay_order(d1.flt, d2.flt, k_max);
    const auto eq = jacobi::verify_order_equivalence(d1.flt, d2.flt, k_max);
    emit(ord, eq);
  }
  return 0;
}

inline int cmd_jacobi_reconstruct(const RunConfig& cfg, const std::string& measure_path, int n) {
  const auto mu = parse_measure_json(cli_detail::load_json_file(measure_path));
  const auto J = jacobi::reconstruct(mu, n);
  auto out = cli_detail::open_output(cfg.out);
  out << "{\n  \"a\": [";
  for (std::size_t i = 0; i < J.a.size(); ++i) out << (i ? ", " : "") << fmt17(J.a[i]);
  out << "],\n  \"b\": [";
  for (std::size_t i = 0; i < J.b.size(); ++i) out << (i ? ", " : "") << fmt17(J.b[i]);
  out << "]\n}\n";
  return 0;
}

inline int cmd_jacobi_m(const RunConfig& cfg, const std::string& jacobi_path) {
  const JacobiDoc d = parse_jacobi_json(cli_detail::load_json_file(jacobi_path));
  if (d.rational) throw ValidationError("jacobi m: trace evaluation runs in float mode");
  const auto pts = ray_points(parse_ray_spec(cfg.ray_spec));
  auto out = cli_detail::open_output(cfg.out);
  out << "re_z,im_z,re_m,im_m\n";
  for (const auto& pt : pts) {
    const cplx m = jacobi::jacobi_m(d.flt, pt.z);
    out << fmt17(pt.z.real()) << "," << fmt17(pt.z.imag()) << "," << fmt17(m.real()) << ","
        << fmt17(m.imag()) << "\n";
  }
  return 0;
}

// Full dispatcher; testable in-process. argv excludes the program name.
inline int run_cli(const std::vector<std::string>& argv, std::ostream& err = std::cerr) {
  CLI::App app{"Weyl-Titchmarsh m-function toolkit with a Borg-Marchenko agreement probe"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string problem, p1, p2, z_list, measure, jacobi_path;
  int k_max = 16, recon_n = 0;

  auto add_common = [&](CLI::App* sub, bool ray, bool kernel) {
    sub->add_option("--tol-ode", cfg.tol_ode, "ODE relative tolerance")->envname("MPROBE_TOL_ODE");
    if (ray) sub->add_option("--ray", cfg.ray_spec, "neg|eps=<rad>,rmin=,rmax=,n=")->envname("MPROBE_RAY");
    if (kernel) sub->add_option("--kernel-h", cfg.kernel_h, "kernel grid step")->envname("MPROBE_KERNEL_H");
    sub->add_option("--jobs", cfg.jobs, "worker threads over spectral points")->envname("MPROBE_JOBS");
    sub->add_option("--out", cfg.out, "output path")->envname("MPROBE_OUT")->required();
  };

  auto* m = app.add_subcommand("m", "m-function evaluation");
  auto* m_eval = m->add_subcommand("eval", "write an m-trace CSV for a problem");
  m_eval->add_option("--problem", problem, "problem JSON")->required();
  add_common(m_eval, true, false);

  auto* probe = app.add_subcommand("probe", "agreement-length probe");
  auto* probe_run_cmd = probe->add_subcommand("run", "probe two problems");
  probe_run_cmd->add_option("--p1", p1, "first problem JSON")->required();
  probe_run_cmd->add_option("--p2", p2, "second problem JSON")->required();
  probe_run_cmd->add_option("--floor", cfg.floor, "difference floor")->envname("MPROBE_FLOOR");
  add_common(probe_run_cmd, true, false);

  auto* replay = app.add_subcommand("replay", "identity replays");
  auto* replay_bm = replay->add_subcommand("borg-marchenko", "Wronskian/product/Volterra residuals");
  replay_bm->add_option("--p1", p1, "first problem JSON")->required();
  replay_bm->add_option("--p2", p2, "second problem JSON")->required();
  replay_bm->add_option("--z", z_list, "comma-separated real spectral points")->required();
  add_common(replay_bm, false, true);

  auto* kernel = app.add_subcommand("kernel", "transformation kernels");
  auto* kernel_compute = kernel->add_subcommand("compute", "write the kernel grid CSV");
  kernel_compute->add_option("--problem", problem, "problem JSON")->required();
  add_common(kernel_compute, false, true);

  auto* jac = app.add_subcommand("jacobi", "Jacobi-operator tools");
  auto* jac_order = jac->add_subcommand("order", "decay order and agreement-depth report");
  jac_order->add_option("--j1", p1, "first Jacobi JSON")->required();
  jac_order->add_option("--j2", p2, "second Jacobi JSON")->required();
  jac_order->add_option("--kmax", k_max, "highest moment compared");
  jac_order->add_option("--out", cfg.out, "output path")->envname("MPROBE_OUT")->required();
  auto* jac_recon = jac->add_subcommand("reconstruct", "coefficients from a discrete measure");
  jac_recon->add_option("--measure", measure, "measure JSON")->required();
  jac_recon->add_option("--n", recon_n, "operator size")->required();
  jac_recon->add_option("--out", cfg.out, "output path")->envname("MPROBE_OUT")->required();
  auto* jac_m = jac->add_subcommand("m", "m-trace CSV of a Jacobi operator");
  jac_m->add_option("--jacobi", jacobi_path, "Jacobi JSON")->required();
  jac_m->add_option("--ray", cfg.ray_spec, "neg|eps=<rad>,rmin=,rmax=,n=")->envname("MPROBE_RAY");
  jac_m->add_option("--out", cfg.out, "output path")->envname("MPROBE_OUT")->required();

  std::vector<const char*> cargs;
  cargs.push_back("mprobe");
  for (const auto& a : argv) cargs.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
    if (m_eval->parsed()) return cmd_m_eval(cfg, problem);
    if (probe_run_cmd->parsed()) return cmd_probe_run(cfg, p1, p2);
    if (replay_bm->parsed()) return cmd_replay(cfg, p1, p2, z_list);
    if (kernel_compute->parsed()) return cmd_kernel_compute(cfg, problem);
    if (jac_order->parsed()) return cmd_jacobi_order(cfg, p1, p2, k_max);
    if (jac_recon->parsed()) return cmd_jacobi_reconstruct(cfg, measure, recon_n);
    if (jac_m->parsed()) return cmd_jacobi_m(cfg, jacobi_path);
    write_error_json(err, 2, "usage", "no subcommand given");
    return 2;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help() << std::endl;
      return 0;
    }
    write_error_json(err, 2, "usage", e.what());
    return 2;
  } catch (const ValidationError& e) {
    write_error_json(err, 2, "validation", e.what(), e.issues());
    return 2;
  } catch (const PoleError& e) {
    write_error_json(err, 3, "numerical", e.what());
    return 3;
  } catch (const NumericalError& e) {
    write_error_json(err, 3, "numerical", e.what());
    return 3;
  }
}

}  // namespace mprobe::cli
