#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "qmts/report.hpp"

namespace qmts {

struct ConvertOptions {
    std::string input;
    std::string direction;  // "mts-to-pctc" | "pctc-to-mts"
    std::string strategy = "auto";
    double tol = 1e-9;
    std::optional<std::string> out;
};

struct ProbOptions {
    std::string object_file;
    std::string instruments_file;
    double tol = 1e-9;
};

struct OrderOptions {
    std::string file_a;
    std::string file_b;
    double tol = 1e-9;
};

struct SelftestOptions {
    std::uint64_t seed = 1;
    std::size_t max_dim = 3;
    std::size_t iterations = 5;
    bool inject_failure = false;
};

Report cmd_convert(const ConvertOptions& opt);
Report cmd_prob(const ProbOptions& opt);
Report cmd_order(const OrderOptions& opt);
Report cmd_selftest(const SelftestOptions& opt);

}  // namespace qmts
