#pragma once

#include <string>
#include <vector>

#include "fop/trainer.hpp"

namespace fop {

struct GradcheckEntry {
  LossKind kind = LossKind::ce;
  double max_rel_err = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double overall() const;
  bool passed(double tol = 1e-4) const;
};

// Checks the analytic whole-model gradients of every loss kind against
// central finite differences (relative step 1e-5) on seeded toy models.
// Error metric per entry: |a - f| / max(|a|, |f|, 1e-3); the floor turns the
// comparison absolute once both gradients are tiny, where the quotient would
// only amplify finite-difference noise.
GradcheckReport run_gradcheck(int n_seeds = 20, Index face_dim = 7, Index voice_dim = 9,
                              Index embed_dim = 8, int batch = 6, int n_classes = 3,
                              int att_layers = 1);

// CSV: loss,max_rel_err
void write_gradcheck_csv(const GradcheckReport& report, const std::string& path);

}  // namespace fop
