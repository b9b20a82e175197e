#pragma once

#include <vector>

#include "qmetro/comb_algebra.hpp"
#include "qmetro/sdp_engine.hpp"
#include "qmetro/strategy_spaces.hpp"

namespace qmetro {

struct HermitianGauge {
    CMat h;
};

// 4 [(dC - i C h)(dC - i C h)^dag]^T on the comb layout.
LabeledMatrix performance_operator(const FactorizedComb& fc, const HermitianGauge& g);
// [[lambda/4 I_r, B^dag], [B, Q]] with B = conj(dC - i C h).
CMat schur_block(double lambda, const FactorizedComb& fc, const HermitianGauge& g, const CMat& q);

// N copies of one channel on slots (2k-1, 2k); vectors are Kronecker products of Kraus kets.
FactorizedComb product_comb(const KrausChannel& ch, int N);
// Channel k acts on slots (2k-1, 2k).
FactorizedComb product_comb(const std::vector<KrausChannel>& channels);

// Drop linearly dependent vectors (rotating the vector frame), keeping the Choi and its
// derivative. Throws RankInstability when a dropped direction still carries a derivative.
struct CompressedComb {
    FactorizedComb fc;
    CMat frame;  // r_orig x k isometry: new vectors = old vectors * frame
};
CompressedComb compress_vectors(const FactorizedComb& fc, double tol = 1e-10);

struct QfiOptions {
    SdpOptions sdp{1e-8, 1e-8, 200, 0.98, 1e10, false};
    double rank_tol = 1e-10;
};

struct QfiResult {
    double value = 0;               // task QFI
    HermitianGauge h_opt;           // on the caller's vector frame
    std::vector<CMat> q_opt;        // per branch; SWI branches are reduced to (in, out)
    StrategySetSpec spec;
    SdpStatus status = SdpStatus::NumericalLimit;
    int iterations = 0;
    double rel_gap = 0;
    double certificate_min_eig = 0;  // min over branches of eig(lambda Q - Omega(h_opt))
    std::vector<CMat> dual_blocks;   // lower-right solver multipliers per branch
    std::vector<CoordinateSpace> coords;

    bool ok() const { return status == SdpStatus::Optimal; }
};

QfiResult task_qfi(const FactorizedComb& fc, const StrategySetSpec& spec, const QfiOptions& opt = {});

// Vectors seen by one branch: the comb itself, or for SWI the vectors with the
// identity links contracted, on layout (in, out).
FactorizedComb branch_vectors(const FactorizedComb& fc, const CoordinateSpace& cs);

}  // namespace qmetro
