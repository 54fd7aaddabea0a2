// Full validation sweep on the default configuration: one line per criterion,
// exit status 0 iff every criterion passes.
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <string>

#include "fhn/config.hpp"
#include "fhn/harness.hpp"

int main(int argc, char** argv) {
  try {
    fhn::RunConfig cfg = argc > 1 ? fhn::load_config(argv[1]) : fhn::parse_config_text("{}");
    const std::string text = fhn::to_json(cfg).dump();
    fhn::SweepReport r = fhn::run_validation(cfg.experiment, true);
    r.run_id = fhn::make_run_id(text, cfg.experiment.seed);
    if (const char* dir = std::getenv("FHN_ACCEPTANCE_OUT")) fhn::emit_report(r, dir);

    for (const auto& c : r.criteria) {
      for (const auto& k : c.checks)
        std::cout << "    " << (k.pass ? "ok  " : "FAIL") << " c" << c.id << " " << k.name << " :: " << k.detail << "\n";
    }
    std::cout << "\n";
    for (const auto& c : r.criteria) std::cout << c.summary_line() << "\n";
    const bool pass = r.criteria.size() == 7 && r.all_pass();
    std::cout << (pass ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL") << "\n";
    return pass ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "acceptance: " << e.what() << "\n";
    return 1;
  }
}
