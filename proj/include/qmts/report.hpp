#pragma once

#include <json.hpp>
#include <string>
#include <vector>

namespace qmts {

// Machine- and human-renderable command result. Every numeric check carries
// its tolerance and the measured residual; the exit code of the tool is 0
// exactly when all checks passed.
struct Report {
    struct Check {
        std::string name;
        bool passed = false;
        double tolerance = 0.0;
        double residual = 0.0;
        std::string detail;
    };

    std::string command;
    std::vector<Check> checks;
    nlohmann::json results = nlohmann::json::object();

    void add_check(const std::string& name, double tolerance, double residual,
                   const std::string& detail = "");
    void add_verdict(const std::string& name, bool passed, const std::string& detail = "");
    bool all_passed() const;

    nlohmann::json to_json() const;
    std::string render_machine() const;
    std::string render_human() const;
};

}  // namespace qmts
