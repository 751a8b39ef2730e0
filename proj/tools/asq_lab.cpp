// asq_lab: runs one experiment per invocation and writes per-trial rows plus summary lines.
// Exit status: 0 on a completed run (see the verdict line), 1 on a configuration error,
// 2 when the experiment itself fails.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "asq/experiments.hpp"

namespace {

using asq::lab::Config;

enum Flag {
    Dim, Qubits, Eps, Phi, Delta, Values, Taus, Dims, Rho, FailProb, Attempts, MaxQubits, MaxT, Transport,
    Parties, State,
};

struct Spec {
    std::set<Flag> flags;
    bool needs_seed = true;
};

const std::map<std::string, Spec> &specs() {
    static const std::map<std::string, Spec> s = {
        {"inprod-asym", {{Dim, Eps, Phi}}},
        {"inprod-sym", {{Dim, Eps, Phi}}},
        {"inprod-real", {{Dim, Qubits, Eps, Delta, MaxT}}},
        {"lincomb", {{}}},
        {"tomography", {{Dim, Eps, FailProb}}},
        {"pauli-dist", {{Qubits, Eps, MaxT, Transport, Parties}}},
        {"colsample", {{Dims, Attempts}}},
        {"tvd-sweep", {{}}},
        {"magic-report", {{State}, false}},
        {"norm-estimate", {{Values, Rho, FailProb}}},
        {"pauli-identities", {{MaxQubits, MaxT}}},
        {"pauli-cdf", {{MaxQubits, Taus, MaxT}}},
        {"perturbed", {{Dim, Eps, Phi}}},
    };
    return s;
}

const std::map<std::string, std::string> &descriptions() {
    static const std::map<std::string, std::string> d = {
        {"inprod-asym", "inner product with exact reads of y"},
        {"inprod-sym", "inner product with sample access to both vectors"},
        {"inprod-real", "real unit vectors, optionally perturbed sampling"},
        {"lincomb", "linear-combination oversampling bounds"},
        {"tomography", "absolute-amplitude tomography soundness"},
        {"pauli-dist", "two-party overlap of Clifford+T states"},
        {"colsample", "block-encoded matrix column sampler"},
        {"tvd-sweep", "sampling-law distance bound on random pairs"},
        {"magic-report", "stabilizer entropies of one state"},
        {"norm-estimate", "relative-error estimate from a noisy scalar oracle"},
        {"pauli-identities", "Pauli representation identities on random states"},
        {"pauli-cdf", "small-coefficient mass bound on random states"},
        {"perturbed", "estimators under perturbed sampling laws"},
    };
    return d;
}

struct Output {
    std::string path;
    std::string format = "csv";
};

void add_options(CLI::App &sub, const Spec &spec, Config &c, Output &out) {
    if (spec.needs_seed) {
        sub.add_option("--seed", c.seed, "root seed")->required();
        sub.add_option("--trials", c.trials, "number of trials")->check(CLI::PositiveNumber);
        sub.add_option("--jobs", c.jobs, "worker threads")->check(CLI::PositiveNumber);
    }
    sub.add_option("--output", out.path, "write rows to this file instead of standard output");
    sub.add_option("--format", out.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    for (Flag f : spec.flags) {
        switch (f) {
            case Dim: sub.add_option("--dim", c.dim, "vector dimension"); break;
            case Qubits: sub.add_option("--qubits", c.qubits, "qubit count"); break;
            case Eps: sub.add_option("--epsilon", c.eps, "target precision"); break;
            case Phi: sub.add_option("--phi", c.phis, "oversampling factors")->delimiter(','); break;
            case Delta: sub.add_option("--delta", c.deltas, "l2 sampling perturbations")->delimiter(','); break;
            case Values: sub.add_option("--values", c.values, "scalars to estimate")->delimiter(','); break;
            case Taus: sub.add_option("--taus", c.taus, "thresholds of the coefficient mass")->delimiter(','); break;
            case Dims: sub.add_option("--dims", c.dims, "square matrix sizes")->delimiter(','); break;
            case Rho: sub.add_option("--rho", c.rho, "relative precision"); break;
            case FailProb: sub.add_option("--fail-prob", c.fail_prob, "failure probability"); break;
            case Attempts: sub.add_option("--attempts", c.attempts, "sampling attempts per matrix"); break;
            case MaxQubits: sub.add_option("--max-qubits", c.max_qubits, "largest qubit count"); break;
            case MaxT: sub.add_option("--max-t", c.max_t, "largest T count of random states"); break;
            case Transport:
                sub.add_option("--transport", c.transport, "local, tcp or both")
                    ->check(CLI::IsMember({"local", "tcp", "both"}));
                break;
            case Parties:
                sub.add_option("--alice", c.alice, "running party host:port");
                sub.add_option("--bob", c.bob, "running party host:port");
                sub.add_option("--alice-state", c.alice_state, "state JSON held by alice");
                sub.add_option("--bob-state", c.bob_state, "state JSON held by bob");
                sub.add_option("--alice-seed", c.alice_seed, "seed alice serves with");
                sub.add_option("--bob-seed", c.bob_seed, "seed bob serves with");
                break;
            case State: sub.add_option("--state", c.state_path, "state vector JSON")->required(); break;
        }
    }
}

void emit(const std::string &name, const asq::lab::Outcome &o, const Output &out) {
    const bool verdict = !o.rows.empty();
    std::ostringstream rows;
    if (out.format == "json") {
        rows << asq::lab::to_json(name, o, verdict).dump(2) << "\n";
    } else if (verdict) {
        asq::lab::write_csv(rows, o);
    }
    if (out.path.empty()) {
        std::cout << rows.str();
        if (out.format == "csv") asq::lab::write_summary(std::cout, o, verdict);
        return;
    }
    std::ofstream f(out.path, std::ios::binary);
    if (!f) throw asq::Error(asq::ErrorCode::Io, "cannot write " + out.path);
    f << rows.str();
    if (out.format == "csv") asq::lab::write_summary(f, o, verdict);
    asq::lab::write_summary(std::cout, o, verdict);
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Experiments for sample-and-query inner product estimation"};
    app.require_subcommand(1);
    Config config;
    Output out;
    std::map<std::string, CLI::App *> subs;
    for (const auto &[name, spec] : specs()) {
        auto *sub = app.add_subcommand(name, descriptions().at(name));
        add_options(*sub, spec, config, out);
        subs[name] = sub;
    }
    // pauli-cdf runs on smaller states unless told otherwise.
    subs["pauli-cdf"]->callback([&] {
        if (subs["pauli-cdf"]->count("--max-qubits") == 0) config.max_qubits = 6;
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return 1;
    }

    std::string name;
    for (const auto &[n, sub] : subs)
        if (sub->parsed()) name = n;

    try {
        for (const auto &[n, run] : asq::lab::experiments()) {
            if (n != name) continue;
            emit(name, run(config), out);
            return 0;
        }
        std::cerr << "unknown experiment " << name << "\n";
        return 1;
    } catch (const asq::lab::ConfigError &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const asq::Error &e) {
        std::cerr << asq::error_code_name(e.code()) << ": " << e.what() << "\n";
        return e.code() == asq::ErrorCode::Io ? 1 : 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
