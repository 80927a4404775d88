// hotskit: batch CLI for the HOTS link-analysis toolkit.
//
// Exit codes: 0 converged, 1 input/usage error, 2 mathematical
// non-convergence (MaxIter / Oscillating / Diverged), so pipelines can branch
// on model infeasibility without parsing logs.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "hotskit/effective.hpp"
#include "hotskit/ideal.hpp"
#include "hotskit/normalized.hpp"
#include "hotskit/ranking.hpp"
#include "hotskit/sparse.hpp"
#include "hotskit/truncated.hpp"

namespace {

using namespace hotskit;

std::string fmt(Real v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

std::string fmt17(Real v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct CommonArgs {
    std::string input;
    std::string format = "edgelist";
    std::string shift = "0";
    Real tol = 1e-9;
    long long max_iter = -1;
    int threads = 0;  // 0: hardware count
    unsigned long long seed = 0;
    bool seeded = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--input", args.input, "graph file")->required();
    cmd->add_option("--format", args.format, "edgelist|mm")
        ->check(CLI::IsMember({"edgelist", "mm"}));
    cmd->add_option("--shift", args.shift,
                    "uniform additive shift c (a number, or 1/n)");
    cmd->add_option("--tol", args.tol, "sup-norm step tolerance");
    cmd->add_option("--max-iter", args.max_iter, "iteration/sweep cap");
    cmd->add_option("--threads", args.threads, "kernel threads (default: hardware)");
    cmd->add_option("--seed", args.seed, "random starting point seed")
        ->each([&args](const std::string&) { args.seeded = true; });
}

std::pair<SparseMatrix, GraphMeta> load_graph(const CommonArgs& args) {
    std::ifstream in(args.input);
    if (!in) throw std::runtime_error("cannot open input file " + args.input);
    SparseMatrix m;
    GraphMeta meta;
    if (args.format == "mm") {
        m = from_matrix_market(in);
        meta = make_meta(m);
    } else {
        std::tie(m, meta) = from_edge_list(in);
    }
    Real shift = 0.0;
    if (args.shift == "1/n") {
        if (m.size() == 0) throw std::runtime_error("--shift 1/n on an empty graph");
        shift = 1.0 / static_cast<Real>(m.size());
    } else {
        try {
            std::size_t pos = 0;
            shift = std::stod(args.shift, &pos);
            if (pos != args.shift.size()) throw std::invalid_argument(args.shift);
        } catch (const std::logic_error&) {
            throw std::runtime_error("bad --shift value \"" + args.shift + "\"");
        }
    }
    if (shift != 0.0) m.set_shift(shift);
    return {std::move(m), std::move(meta)};
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

ScoreState start_state(Index len, const CommonArgs& args) {
    ScoreState s = ScoreState::zeros(len);
    if (args.seeded) {
        std::mt19937_64 rng(args.seed);
        for (Real& v : s.p) {
            v = (static_cast<Real>(rng() >> 11) * 0x1.0p-53) - 0.5;
        }
        normalize(s);
    }
    return s;
}

void write_ranking(const Ranking& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file " + path);
    std::vector<Index> rank_of(r.scores.size());
    for (std::size_t k = 0; k < r.order.size(); ++k) {
        rank_of[static_cast<std::size_t>(r.order[k])] = static_cast<Index>(k) + 1;
    }
    out << "node\tscore\trank\n";
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
        out << i << '\t' << fmt17(r.scores[i]) << '\t' << rank_of[i] << '\n';
    }
}

void write_trace_csv(const SolveReport& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open trace file " + path);
    out << "iter,theta,residual,rate\n";
    std::size_t rows = std::max(rep.theta_trace.size(), rep.residual_trace.size());
    for (std::size_t k = 0; k < rows; ++k) {
        Real theta = k < rep.theta_trace.size() ? rep.theta_trace[k] : kNaN;
        Real res = k < rep.residual_trace.size() ? rep.residual_trace[k] : kNaN;
        Real rate = kNaN;
        if (k > 0 && k < rep.residual_trace.size() && rep.residual_trace[k - 1] > 0.0) {
            rate = res / rep.residual_trace[k - 1];
        }
        out << 1 + static_cast<long long>(k) * rep.trace_stride << ',' << fmt(theta)
            << ',' << fmt(res) << ',' << fmt(rate) << '\n';
    }
}

void write_trace_jsonl(const SolveReport& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open trace file " + path);
    auto field = [](Real v) { return std::isfinite(v) ? fmt(v) : "null"; };
    std::size_t rows = std::max(rep.theta_trace.size(), rep.residual_trace.size());
    for (std::size_t k = 0; k < rows; ++k) {
        Real theta = k < rep.theta_trace.size() ? rep.theta_trace[k] : kNaN;
        Real res = k < rep.residual_trace.size() ? rep.residual_trace[k] : kNaN;
        Real rate = kNaN;
        if (k > 0 && k < rep.residual_trace.size() && rep.residual_trace[k - 1] > 0.0) {
            rate = res / rep.residual_trace[k - 1];
        }
        out << "{\"iter\":" << 1 + static_cast<long long>(k) * rep.trace_stride
            << ",\"theta\":" << field(theta) << ",\"residual\":" << field(res)
            << ",\"rate\":" << field(rate) << "}\n";
    }
}

int exit_code(SolveStatus status) {
    return status == SolveStatus::Converged ? 0 : 2;
}

struct ReportLine {
    std::ostringstream line;
    void add(const std::string& key, const std::string& value) {
        if (line.tellp() > 0) line << ' ';
        line << key << '=' << value;
    }
    void add(const std::string& key, Real value) { add(key, fmt(value)); }
    void add(const std::string& key, long long value) { add(key, std::to_string(value)); }
    void print() const { std::cout << line.str() << '\n'; }
};

// ---------------------------------------------------------------------------

int run_rank(const CommonArgs& args, const std::string& algo, Real alpha,
             Real deform_alpha, Real damping, const std::string& bounds_path,
             const std::string& out_path, const std::string& trace_path,
             const std::string& trace_jsonl_path) {
    auto t0 = std::chrono::steady_clock::now();
    auto [m, meta] = load_graph(args);
    const Index n = m.size();
    int threads = resolve_threads(args.threads);

    IdealOptions iopts;
    iopts.tol = args.tol;
    iopts.max_iter = args.max_iter;
    iopts.threads = threads;
    EffectiveOptions eopts;
    eopts.alpha = alpha;
    eopts.tol = args.tol;
    eopts.max_iter = args.max_iter;
    eopts.threads = threads;

    Ranking ranking;
    SolveReport report;
    ReportLine out;
    out.add("algo", algo);
    out.add("n", static_cast<long long>(n));
    out.add("m", static_cast<long long>(m.nnz()));

    if (algo == "ideal" || algo == "dss") {
        auto [state, rep] = algo == "ideal" ? ideal_solve(m, start_state(n, args), iopts)
                                            : dss_solve(m, start_state(n, args), iopts);
        report = std::move(rep);
        ranking = make_ranking(state.scores(), algo);
    } else if (algo == "deformed") {
        std::vector<Real> x0(static_cast<std::size_t>(n), 1.0);
        if (args.seeded) {
            ScoreState s = start_state(n, args);
            x0 = s.scores();
        }
        auto [x, rep] = deformed_solve(m, x0, deform_alpha, iopts);
        report = std::move(rep);
        ranking = make_ranking(std::move(x), algo,
                               {{"deform-alpha", fmt(deform_alpha)}});
        out.add("deform_alpha", deform_alpha);
    } else if (algo == "effective" || algo == "effective-cd") {
        EffectiveResult res = algo == "effective"
                                  ? effective_solve(m, start_state(n + 1, args), eopts)
                                  : effective_cd_solve(m, start_state(n + 1, args), eopts);
        report = std::move(res.report);
        std::vector<Real> scores(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) {
            scores[static_cast<std::size_t>(i)] =
                std::exp(res.state.p[static_cast<std::size_t>(i)]);
        }
        ranking = make_ranking(std::move(scores), algo, {{"alpha", fmt(alpha)}});
        out.add("alpha", alpha);
        out.add("mu", res.params.mu);
        out.add("a", res.params.a);
        out.add("b", res.params.b);
    } else if (algo == "bounded") {
        if (bounds_path.empty()) {
            throw std::runtime_error("--algo bounded requires --bounds");
        }
        std::ifstream bin(bounds_path);
        if (!bin) throw std::runtime_error("cannot open bounds file " + bounds_path);
        BoundsSet bounds = BoundsSet::from_stream(m, bin);
        EffectiveResult res = bounded_hots_solve(m, bounds, start_state(n + 1, args), eopts);
        report = std::move(res.report);
        std::vector<Real> scores(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) {
            scores[static_cast<std::size_t>(i)] =
                std::exp(res.state.p[static_cast<std::size_t>(i)]);
        }
        ranking = make_ranking(std::move(scores), algo, {{"alpha", fmt(alpha)}});
        out.add("alpha", alpha);
        out.add("mu", res.params.mu);
    } else if (algo == "normalized") {
        NormalizedModel model = build_normalized(m, meta, alpha);
        NormalizedResult res = normalized_solve(model, start_state(n + 2, args), eopts);
        report = std::move(res.report);
        std::vector<Real> scores(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) {
            scores[static_cast<std::size_t>(i)] =
                std::exp(res.pages_state.p[static_cast<std::size_t>(i)]);
        }
        ranking = make_ranking(std::move(scores), algo, {{"alpha", fmt(alpha)}});
        out.add("alpha", alpha);
    } else if (algo == "pagerank") {
        ranking = pagerank(m, damping, std::min(args.tol, 1e-10));
        report.status = SolveStatus::Converged;
        report.iterations = 0;
        out.add("damping", damping);
    } else {
        throw std::runtime_error("unknown algorithm " + algo);
    }

    out.add("status", to_string(report.status));
    out.add("iterations", static_cast<long long>(report.iterations));
    if (std::isfinite(report.residual)) out.add("residual", report.residual);
    if (std::isfinite(report.rate_estimate)) out.add("rate_estimate", report.rate_estimate);
    if (!report.theta_trace.empty()) out.add("theta", report.theta_trace.back());
    for (const std::string& w : report.warnings) std::cerr << "warning: " << w << '\n';
    if (!out_path.empty()) {
        write_ranking(ranking, out_path);
        out.add("out", out_path);
    }
    if (!trace_path.empty()) {
        write_trace_csv(report, trace_path);
        out.add("trace", trace_path);
    }
    if (!trace_jsonl_path.empty()) write_trace_jsonl(report, trace_jsonl_path);
    int rc = exit_code(report.status);
    out.add("exit", static_cast<long long>(rc));
    out.print();
    auto t1 = std::chrono::steady_clock::now();
    std::cerr << "elapsed_s="
              << fmt(std::chrono::duration<double>(t1 - t0).count()) << '\n';
    return rc;
}

int run_rate(const CommonArgs& args, const std::string& algo, Real alpha,
             std::string method) {
    auto [m, meta] = load_graph(args);
    const Index n = m.size();
    ReportLine out;
    out.add("algo", algo);
    out.add("n", static_cast<long long>(n));

    RateEstimate est;
    SolveStatus solve_status = SolveStatus::MaxIter;
    if (algo == "ideal") {
        if (method.empty()) method = n <= 2000 ? "dense" : "power";
        IdealOptions iopts;
        iopts.tol = std::min(args.tol, 1e-11);
        iopts.max_iter = args.max_iter;
        auto [state, rep] = dss_solve(m, ScoreState::zeros(n), iopts);
        solve_status = rep.status;
        if (solve_status == SolveStatus::Converged) {
            est = rate_ideal(m, state.p,
                             method == "dense" ? RateMethod::Dense : RateMethod::Power);
        }
    } else if (algo == "effective" || algo == "normalized") {
        // the normalized model's inner system carries one extra node
        Index reduced_n = algo == "normalized" ? n + 1 : n;
        if (method.empty()) method = reduced_n <= 2000 ? "fd-dense" : "fd-power";
        EffectiveOptions eopts;
        eopts.alpha = alpha;
        eopts.tol = std::min(args.tol, 1e-11);
        eopts.max_iter = args.max_iter;
        eopts.threads = resolve_threads(args.threads);
        SparseMatrix work;
        std::vector<Real> p_aug;
        if (algo == "normalized") {
            NormalizedModel model = build_normalized(m, meta, alpha);
            NormalizedResult res = normalized_solve(model, ScoreState::zeros(n + 2), eopts);
            solve_status = res.report.status;
            work = std::move(model.inner);
            p_aug = std::move(res.p_inner);
        } else {
            EffectiveResult res = effective_solve(m, ScoreState::zeros(n + 1), eopts);
            solve_status = res.report.status;
            work = std::move(m);
            p_aug = res.state.p;
        }
        if (solve_status == SolveStatus::Converged) {
            est = rate_effective(work, p_aug, alpha,
                                 method == "fd-dense" ? RateEffMethod::FdDense
                                                      : RateEffMethod::FdPower);
        }
    } else {
        throw std::runtime_error("unknown algorithm " + algo);
    }
    out.add("method", method);
    out.add("solve_status", to_string(solve_status));
    if (solve_status == SolveStatus::Converged) {
        out.add("rate", est.value);
        out.add("rate_converged", static_cast<long long>(est.converged ? 1 : 0));
    }
    int rc = solve_status == SolveStatus::Converged ? 0 : 2;
    out.add("exit", static_cast<long long>(rc));
    out.print();
    return rc;
}

int run_flow(const CommonArgs& args, const std::string& scores_path,
             const std::string& out_path) {
    auto [m, meta] = load_graph(args);
    (void)meta;
    std::ifstream sin(scores_path);
    if (!sin) throw std::runtime_error("cannot open scores file " + scores_path);
    std::vector<Real> p(static_cast<std::size_t>(m.size()), kNaN);
    std::string line;
    if (!std::getline(sin, line)) throw std::runtime_error("empty scores file");
    while (std::getline(sin, line)) {
        std::istringstream ls(line);
        long long node;
        Real score;
        if (!(ls >> node >> score)) continue;
        if (node < 0 || node >= m.size()) {
            throw std::runtime_error("scores file references node " +
                                     std::to_string(node));
        }
        if (!(score > 0.0)) throw std::runtime_error("scores must be positive");
        p[static_cast<std::size_t>(node)] = std::log(score);
    }
    for (Real v : p) {
        if (std::isnan(v)) throw std::runtime_error("scores file misses some nodes");
    }
    BalancedFlow flow = recover_flow(m, p);
    {
        std::ofstream fout(out_path);
        if (!fout) throw std::runtime_error("cannot open output file " + out_path);
        fout << "src\tdst\tflow\n";
        for (Index i = 0; i < m.size(); ++i) {
            auto cols = flow.rho.row_cols(i);
            auto vals = flow.rho.row_vals(i);
            for (std::size_t k = 0; k < cols.size(); ++k) {
                fout << i << '\t' << cols[k] << '\t' << fmt17(vals[k]) << '\n';
            }
        }
    }
    ReportLine out;
    out.add("mu", flow.mu);
    out.add("total_mass", flow.total_mass);
    out.add("shift_mass", flow.shift_mass);
    out.add("balance_residual", flow.balance_residual);
    out.add("balanced", static_cast<long long>(flow.balanced ? 1 : 0));
    out.add("out", out_path);
    out.add("exit", 0LL);
    out.print();
    return 0;
}

std::vector<Real> read_scores(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scores file " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty scores file " + path);
    std::vector<Real> scores;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        long long node;
        Real score;
        if (!(ls >> node >> score)) continue;
        if (node < 0) throw std::runtime_error("negative node id in " + path);
        if (static_cast<std::size_t>(node) >= scores.size()) {
            scores.resize(static_cast<std::size_t>(node) + 1, kNaN);
        }
        scores[static_cast<std::size_t>(node)] = score;
    }
    for (Real v : scores) {
        if (std::isnan(v)) throw std::runtime_error(path + " misses some nodes");
    }
    return scores;
}

int run_compare(const std::string& a_path, const std::string& b_path) {
    Ranking a = make_ranking(read_scores(a_path), "a");
    Ranking b = make_ranking(read_scores(b_path), "b");
    Real tau = kendall_tau(a, b);
    ReportLine out;
    out.add("n", static_cast<long long>(a.scores.size()));
    out.add("kendall_tau", tau);
    out.add("exit", 0LL);
    out.print();
    return 0;
}

int run_synth(const std::string& model, long long n, unsigned long long seed,
              long long chords, long long avg_out, const std::string& out_path) {
    SynthModel sm;
    Index extra = -1;
    if (model == "cycle-plus-chords") {
        sm = SynthModel::CyclePlusChords;
        extra = chords;
    } else if (model == "preferential") {
        sm = SynthModel::Preferential;
        extra = avg_out;
    } else {
        throw std::runtime_error("unknown model " + model);
    }
    auto edges = synth_graph(n, sm, seed, extra);
    std::ofstream fout(out_path);
    if (!fout) throw std::runtime_error("cannot open output file " + out_path);
    fout << "# synth model=" << model << " n=" << n << " seed=" << seed << "\n";
    for (auto [u, v] : edges) fout << u << ' ' << v << '\n';
    ReportLine out;
    out.add("model", model);
    out.add("n", n);
    out.add("edges", static_cast<long long>(edges.size()));
    out.add("out", out_path);
    out.add("exit", 0LL);
    out.print();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hotskit: entropy-scaling link-analysis toolkit"};
    app.require_subcommand(1);

    CommonArgs rank_args;
    std::string rank_algo;
    Real alpha = 0.9, deform_alpha = 0.5, damping = 0.85;
    std::string bounds_path, out_path, trace_path, trace_jsonl_path;
    auto* rank = app.add_subcommand("rank", "compute a ranking");
    rank->add_option("--algo", rank_algo, "ranking algorithm")
        ->required()
        ->check(CLI::IsMember({"ideal", "dss", "deformed", "effective", "effective-cd",
                               "bounded", "normalized", "pagerank"}));
    add_common(rank, rank_args);
    rank->add_option("--alpha", alpha, "effective-model throughput parameter");
    rank->add_option("--deform-alpha", deform_alpha, "deformed-family exponent in [0,1]");
    rank->add_option("--damping", damping, "pagerank damping");
    rank->add_option("--bounds", bounds_path, "flow bounds file (src dst lower upper)");
    rank->add_option("--out", out_path, "ranking TSV output");
    rank->add_option("--trace", trace_path, "iteration trace CSV");
    rank->add_option("--trace-jsonl", trace_jsonl_path, "iteration trace JSON lines");

    CommonArgs rate_args;
    std::string rate_algo, rate_method;
    Real rate_alpha = 0.9;
    auto* rate = app.add_subcommand("rate", "convergence-rate diagnostics");
    rate->add_option("--algo", rate_algo, "model")
        ->required()
        ->check(CLI::IsMember({"ideal", "effective", "normalized"}));
    add_common(rate, rate_args);
    rate->add_option("--method", rate_method, "dense|power|fd-dense|fd-power")
        ->check(CLI::IsMember({"dense", "power", "fd-dense", "fd-power"}));
    rate->add_option("--alpha", rate_alpha, "effective-model throughput parameter");

    CommonArgs flow_args;
    std::string scores_path, flow_out = "flow.tsv";
    auto* flowc = app.add_subcommand("flow", "recover the websurfer flow from scores");
    add_common(flowc, flow_args);
    flowc->add_option("--scores", scores_path, "ranking TSV produced by rank")->required();
    flowc->add_option("--out", flow_out, "flow TSV output");

    std::string cmp_a, cmp_b;
    auto* cmp = app.add_subcommand("compare", "Kendall tau-b between two rankings");
    cmp->add_option("--a", cmp_a, "first ranking TSV")->required();
    cmp->add_option("--b", cmp_b, "second ranking TSV")->required();

    std::string synth_model = "cycle-plus-chords", synth_out = "graph.tsv";
    long long synth_n = 100, synth_chords = -1, synth_avg_out = -1;
    unsigned long long synth_seed = 1;
    auto* synth = app.add_subcommand("synth", "generate a synthetic graph");
    synth->add_option("--model", synth_model, "cycle-plus-chords|preferential")
        ->check(CLI::IsMember({"cycle-plus-chords", "preferential"}));
    synth->add_option("--n", synth_n, "node count")->required();
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--chords", synth_chords, "chord count (cycle model)");
    synth->add_option("--avg-out", synth_avg_out, "mean out-degree (preferential)");
    synth->add_option("--out", synth_out, "edge list output");

    CLI11_PARSE(app, argc, argv);
    try {
        if (rank->parsed()) {
            return run_rank(rank_args, rank_algo, alpha, deform_alpha, damping,
                            bounds_path, out_path, trace_path, trace_jsonl_path);
        }
        if (rate->parsed()) {
            return run_rate(rate_args, rate_algo, rate_alpha, rate_method);
        }
        if (flowc->parsed()) {
            return run_flow(flow_args, scores_path, flow_out);
        }
        if (cmp->parsed()) {
            return run_compare(cmp_a, cmp_b);
        }
        if (synth->parsed()) {
            return run_synth(synth_model, synth_n, synth_seed, synth_chords,
                             synth_avg_out, synth_out);
        }
    } catch (const std::exception& e) {
        std::cout << "status=InputError exit=1 error=\"" << e.what() << "\"\n";
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
