#ifndef ORBITNF_TRANSFER_HPP
#define ORBITNF_TRANSFER_HPP

#include "orbitnf/dynamics.hpp"
#include "orbitnf/transforms.hpp"

namespace orbitnf {

// (H - shift)/w(q) with w(q) = dH/dp0 (q, 0); shares the energy surface
// {H = shift} with H as the zero level, with reparametrized dynamics on it.
class ShiftedScaledField final : public HamiltonianField {
 public:
  ShiftedScaledField(HamPtr root, double shift, double w_margin = 0.1);
  std::string kind() const override { return "shifted-scaled"; }
  Vec fiber_gradient(const PhaseState& x) const override;
  Mat fiber_hessian(const PhaseState& x) const override;
  double weight(const Vec& q) const;
  double shift() const { return shift_; }
  const HamPtr& root() const { return root_; }

 protected:
  double value_impl(const PhaseState& x) const override;

 private:
  HamPtr root_;
  double shift_;
  double w_margin_;
};

// root + coeff * [w(q)] * g(q) for a potential g; the optional weight is the
// root's dH/dp0 on the zero section.
class PotentialSumField final : public HamiltonianField {
 public:
  PotentialSumField(HamPtr root, ExprPtr potential, double coeff, bool weight_by_w);
  std::string kind() const override { return "sum-with-potential"; }
  Vec fiber_gradient(const PhaseState& x) const override;
  Mat fiber_hessian(const PhaseState& x) const override;

 protected:
  double value_impl(const PhaseState& x) const override;

 private:
  HamPtr root_;
  ExprPtr g_;
  double coeff_;
  bool weight_by_w_;
};

HamPtr maupertuis_normalize(HamPtr H, double w_margin = 0.1);

struct MaupertuisDiagnostics {
  double value_drift; // max |Ht(t e0, 0)| over the grid
  double slope_drift; // max |dHt/dp0 (t e0, 0) - 1|
};
MaupertuisDiagnostics maupertuis_diagnostics(const HamiltonianField& Ht, double delta,
                                             int grid_points = 11);

struct SectionOptions {
  int steps_per_unit = 512;
  double time_budget = 4.0;          // max integration time per shot
  double event_time_tol = 1e-10;
  double transversality_margin = 0.1;
  double p0_bracket = 0.9;
};

// Transition between {q0 = 0} and {q0 = delta} on the energy surface
// {H = e}: completes p0 from the energy, integrates, and locates the
// crossing on the dense output.  Input and output are (q*, p*).
Vec section_map(const HamiltonianField& H, double e, const Vec& transverse,
                double delta, const SectionOptions& opts = {});

// Full phase state at the crossing (for energy bookkeeping).
Vec section_event_state(const HamiltonianField& H, double e, const Vec& transverse,
                        double delta, const SectionOptions& opts = {});

struct TransferMatrix {
  Mat L; // 2d x 2d, coordinates (q*, p*)
  double symplecticity_residual;
  double energy;
  double delta;
  double fd_step;
  Json to_json() const;
};

TransferMatrix linearize_transfer(const HamiltonianField& H, double e, double delta,
                                  double fd_step = 1e-4,
                                  const SectionOptions& opts = {});

struct ReparamCheck {
  TransferMatrix L_H;
  TransferMatrix L_Ht;
  double difference;           // max-abs entry of L_H - L_Ht
  double surface_coincidence;  // max |H - H(0)| at points completed on {Ht = 0}
};
ReparamCheck reparam_invariance_check(HamPtr H, double delta,
                                      const SectionOptions& opts = {});

struct ManeRow {
  double eps;
  double identity_residual; // |L_{H + eps w g} - L_{Ht + eps g}|
  double effect_size;       // |L_{H + eps w g} - L_H|
  double symplecticity_1;
  double symplecticity_2;
};

std::vector<ManeRow> mane_perturbation_experiment(HamPtr H, const std::string& g_text,
                                                  const std::vector<double>& eps_list,
                                                  double delta,
                                                  const SectionOptions& opts = {});

} // namespace orbitnf

#endif
