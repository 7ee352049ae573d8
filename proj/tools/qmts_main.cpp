#include <CLI11.hpp>
#include <iostream>

#include "qmts/cli.hpp"
#include "qmts/errors.hpp"

namespace {

int emit(const qmts::Report& rep, const std::string& format) {
    if (format == "machine")
        std::cout << rep.render_machine();
    else
        std::cout << rep.render_human();
    return rep.all_passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-time states and post-selected CTC combs"};
    app.require_subcommand(1);
    std::string format = "human";
    app.add_option("--format", format, "report rendering: human or machine")
        ->check(CLI::IsMember({"human", "machine"}));

    qmts::ConvertOptions conv;
    auto* convert = app.add_subcommand(
        "convert", "convert between multi-time objects and P-CTC combs");
    convert->add_option("input", conv.input, "input document")->required();
    convert->add_option("--direction", conv.direction, "mts-to-pctc or pctc-to-mts")
        ->required()
        ->check(CLI::IsMember({"mts-to-pctc", "pctc-to-mts"}));
    convert->add_option("--strategy", conv.strategy, "teleported set: b2, f1 or auto")
        ->check(CLI::IsMember({"b2", "f1", "auto"}));
    convert->add_option("--tol", conv.tol, "equivalence tolerance");
    std::string out_path;
    convert->add_option("--out", out_path, "output document path");

    qmts::ProbOptions prob;
    auto* probc = app.add_subcommand("prob", "outcome probabilities of an object");
    probc->add_option("object", prob.object_file, "mts, comb or plan document")->required();
    probc->add_option("instruments", prob.instruments_file, "instruments document")
        ->required();
    probc->add_option("--tol", prob.tol, "numeric tolerance");

    qmts::OrderOptions ord;
    auto* orderc = app.add_subcommand("order", "partial-order verdict for two objects");
    orderc->add_option("a", ord.file_a, "first mts document")->required();
    orderc->add_option("b", ord.file_b, "second mts document")->required();
    orderc->add_option("--tol", ord.tol, "isomorphism tolerance");

    qmts::SelftestOptions self;
    auto* selfc = app.add_subcommand("selftest", "seeded invariant suites");
    selfc->add_option("--seed", self.seed, "random seed");
    selfc->add_option("--sizes", self.max_dim, "largest subsystem dimension");
    selfc->add_option("--iterations", self.iterations, "instances per suite");
    selfc->add_flag("--inject-failure", self.inject_failure,
                    "corrupt a fixture to demonstrate failure reporting");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*convert) {
            if (!out_path.empty()) conv.out = out_path;
            return emit(qmts::cmd_convert(conv), format);
        }
        if (*probc) return emit(qmts::cmd_prob(prob), format);
        if (*orderc) return emit(qmts::cmd_order(ord), format);
        if (*selfc) return emit(qmts::cmd_selftest(self), format);
    } catch (const qmts::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const qmts::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
