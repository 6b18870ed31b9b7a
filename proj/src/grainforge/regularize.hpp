#pragma once

#include "energy.hpp"
#include "field.hpp"
#include "grid_calculus.hpp"

namespace grainforge {

struct BadSetReport {
  std::vector<std::uint8_t> E;       // maximal function > 2
  std::vector<std::uint8_t> Eprime;  // eps-ball opening of E
  std::vector<std::uint8_t> U;       // working set for the extension
  double measure_E = 0.0;
  double elastic = 0.0;
  double measured_constant = 0.0;  // |E| / elastic (0 when elastic = 0)
};

BadSetReport bad_set(const GridField& field, const DefectSet& defects, const ModelParams& params);

struct TruncateResult {
  GridField field;
  DefectSet defects;
  BadSetReport bad;
  double sup_modified = 0.0;  // sup |A'| over the modified cells
  int modified_cells = 0;
};

// Bounded truncation: replace the field on U by blended affine extensions from
// nearby good anchors (simplified Whitney variant); enlarge the defect set to
// B_{(lambda+6)eps}(S) ∪ B_eps(E').
TruncateResult truncate(const GridField& field, const DefectSet& defects,
                        const ModelParams& params);

struct MollifyResult {
  GridField field;
  DefectSet defects;
  double curl_sup_inside = 0.0;   // sup |Curl A''| on the enlarged defect set
  double curl_sup_outside = 0.0;  // sup |Curl A''| outside it
};

// A'' = (1-zeta) A-hat + zeta (A-hat * phi_{lambda eps}); defects'' = B_{2 lambda eps}(S').
MollifyResult mollify_curl(const GridField& field, const DefectSet& defects,
                           const ModelParams& params);

struct HarmonicResult {
  GridField field;
  double div_residual_sup = 0.0;   // outside the defect set
  double curl_residual_sup = 0.0;  // outside the defect set
  double grad_z_norm2 = 0.0;
  double input_elastic = 0.0;
  int iterations = 0;
};

// Solve Δz = Div A'' on the vertices clear of the defect cells (z in H^1_0) and
// subtract the gradient; div/curl residuals are reported in the same discrete
// calculus the solve uses.
HarmonicResult harmonic_replace(const GridField& field, const DefectSet& defects,
                                const ModelParams& params);

struct PipelineReport {
  EnergyBreakdown input, truncated, mollified, harmonic;
  double sup_truncated = 0.0;
  double curl_sup_inside = 0.0, curl_sup_outside = 0.0;
  double div_residual = 0.0, curl_residual = 0.0, grad_z_norm2 = 0.0;
  std::string to_json(const ModelParams& params) const;
};

struct PipelineResult {
  GridField field;
  DefectSet defects;
  PipelineReport report;
};

PipelineResult regularize_pipeline(const GridField& field, const DefectSet& defects,
                                   const ModelParams& params);

}  // namespace grainforge
