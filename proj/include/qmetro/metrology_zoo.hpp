#pragma once

#include "qmetro/comb_algebra.hpp"
#include "qmetro/task_qfi.hpp"

namespace qmetro {

// Signal channels carry analytic d/dphi; noise channels carry zero derivatives.
KrausChannel rz(double phi);  // e^{-i phi Z/2}
KrausChannel rx(double phi);  // e^{-i phi X/2}
KrausChannel uz(double omega, double t);  // e^{-i omega t Z/2}, derivative in omega
KrausChannel identity_channel(int d = 2);
KrausChannel amplitude_damping(double p);
KrausChannel bit_flip(double p);
KrausChannel phase_flip(double p);
// T1/T2 relaxation towards the population a0 of |0>.
KrausChannel nmr_relaxation(double t, double T1, double T2, double a0);

enum class CompositionOrder {
    SignalAfterNoise,  // E = S o N
    NoiseAfterSignal   // E = N o S
};
KrausChannel compose(const KrausChannel& signal, const KrausChannel& noise,
                     CompositionOrder order = CompositionOrder::SignalAfterNoise);

// Rz(phi) o AD(p1) on slots (1,2) and Rz(phi) o AD(p2) on slots (3,4).
FactorizedComb nonidentical_pair(double p1, double p2, double phi);

// exp(-i H tau) and its derivative along dH (spectral divided differences).
struct ExpmWithDerivative {
    CMat u;
    CMat du;
};
ExpmWithDerivative expm_derivative(const CMat& h, const CMat& dh, double tau);

// Two steps of U = exp(-i (phi Z(x)I + g (XX+YY+ZZ)) t/2) sharing an environment qubit
// prepared in |0>. The Markovian variant re-prepares the environment between steps.
FactorizedComb nonmarkovian_swap_comb(double phi, double g, double t, bool markovian);

// Best probe-only strategy for a two-step comb: the middle tooth is an identity wire.
QfiResult control_free(const FactorizedComb& fc, const QfiOptions& opt = {});
double control_free_qfi(const FactorizedComb& fc, const QfiOptions& opt = {});

}  // namespace qmetro
