#pragma once
// One row of filter diagnostics per assimilation step: the first two moments
// of the u belief immediately before and after the analysis.

namespace switchfilter {

struct FilterTraceRow {
  int step = 0;
  double prior_mean = 0.0;
  double prior_var = 0.0;
  double post_mean = 0.0;
  double post_var = 0.0;
};

}  // namespace switchfilter
