#include "qmts/report.hpp"

#include <sstream>

namespace qmts {

void Report::add_check(const std::string& name, double tolerance, double residual,
                       const std::string& detail) {
    checks.push_back({name, residual <= tolerance, tolerance, residual, detail});
}

void Report::add_verdict(const std::string& name, bool passed, const std::string& detail) {
    checks.push_back({name, passed, 0.0, 0.0, detail});
}

bool Report::all_passed() const {
    for (const auto& c : checks)
        if (!c.passed) return false;
    return true;
}

nlohmann::json Report::to_json() const {
    nlohmann::json j;
    j["format"] = "qmts/1";
    j["kind"] = "report";
    j["command"] = command;
    nlohmann::json cj = nlohmann::json::array();
    for (const auto& c : checks) {
        nlohmann::json e;
        e["name"] = c.name;
        e["passed"] = c.passed;
        e["tolerance"] = c.tolerance;
        e["residual"] = c.residual;
        e["detail"] = c.detail;
        cj.push_back(std::move(e));
    }
    j["checks"] = std::move(cj);
    j["results"] = results;
    j["passed"] = all_passed();
    return j;
}

std::string Report::render_machine() const { return to_json().dump(2) + "\n"; }

std::string Report::render_human() const {
    std::ostringstream os;
    os << "command: " << command << "\n";
    if (!results.empty()) {
        os << "results:\n";
        for (auto it = results.begin(); it != results.end(); ++it)
            os << "  " << it.key() << ": " << it.value().dump() << "\n";
    }
    if (!checks.empty()) {
        os << "checks:\n";
        for (const auto& c : checks) {
            os << "  [" << (c.passed ? "pass" : "FAIL") << "] " << c.name;
            if (c.tolerance > 0.0)
                os << "  (residual " << c.residual << " vs tolerance " << c.tolerance << ")";
            if (!c.detail.empty()) os << "  - " << c.detail;
            os << "\n";
        }
    }
    os << (all_passed() ? "status: ok" : "status: failed") << "\n";
    return os.str();
}

}  // namespace qmts
