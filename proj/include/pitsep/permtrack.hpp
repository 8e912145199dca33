#pragma once

// Inference-time permutation tracking: seeded k-means over frame embeddings,
// cluster-to-permutation assignment and speaker-consistent reconstruction.

#include <array>
#include <random>
#include <vector>

#include "pitsep/errors.hpp"
#include "pitsep/losses.hpp"
#include "pitsep/models.hpp"

namespace pitsep {

struct KmeansResult {
    std::vector<int> assignments;
    Mat<double> centroids;  // k x D
    double inertia = 0.0;
    int iterations = 0;
};

// k-means++ init, Lloyd iterations to an assignment fixpoint or max_iter.
// Empty clusters are reseeded to the farthest point. Deterministic given seed.
template <class S>
KmeansResult kmeans(const Mat<S>& emb, int k, uint64_t seed, int max_iter = 100) {
    const Eigen::Index K = emb.cols(), D = emb.rows();
    if (k < 1 || static_cast<Eigen::Index>(k) > K)
        throw ParamError("kmeans: need 1 <= k <= number of points");
    Mat<double> x = emb.template cast<double>();
    std::mt19937_64 rng(seed);

    Mat<double> cent(k, D);
    {
        std::uniform_int_distribution<Eigen::Index> u(0, K - 1);
        cent.row(0) = x.col(u(rng)).transpose();
        std::vector<double> d2(K);
        for (int c = 1; c < k; ++c) {
            double total = 0.0;
            for (Eigen::Index i = 0; i < K; ++i) {
                double best = std::numeric_limits<double>::max();
                for (int j = 0; j < c; ++j)
                    best = std::min(best, (x.col(i).transpose() - cent.row(j)).squaredNorm());
                d2[i] = best;
                total += best;
            }
            if (total <= 0.0) {
                cent.row(c) = x.col(std::uniform_int_distribution<Eigen::Index>(0, K - 1)(rng))
                                  .transpose();
                continue;
            }
            std::uniform_real_distribution<double> ur(0.0, total);
            double r = ur(rng), acc = 0.0;
            Eigen::Index pick = K - 1;
            for (Eigen::Index i = 0; i < K; ++i) {
                acc += d2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
            cent.row(c) = x.col(pick).transpose();
        }
    }

    KmeansResult res;
    res.assignments.assign(K, -1);
    for (int it = 0; it < max_iter; ++it) {
        bool changed = false;
        double inertia = 0.0;
        for (Eigen::Index i = 0; i < K; ++i) {
            int best = 0;
            double bd = std::numeric_limits<double>::max();
            for (int j = 0; j < k; ++j) {
                const double d = (x.col(i).transpose() - cent.row(j)).squaredNorm();
                if (d < bd) {
                    bd = d;
                    best = j;
                }
            }
            if (res.assignments[i] != best) changed = true;
            res.assignments[i] = best;
            inertia += bd;
        }
        res.inertia = inertia;
        res.iterations = it + 1;
        if (!changed && it > 0) break;
        Mat<double> sums = Mat<double>::Zero(k, D);
        std::vector<Eigen::Index> counts(k, 0);
        for (Eigen::Index i = 0; i < K; ++i) {
            sums.row(res.assignments[i]) += x.col(i).transpose();
            counts[res.assignments[i]] += 1;
        }
        for (int j = 0; j < k; ++j) {
            if (counts[j] > 0) {
                cent.row(j) = sums.row(j) / static_cast<double>(counts[j]);
            } else {
                Eigen::Index far = 0;
                double fd = -1.0;
                for (Eigen::Index i = 0; i < K; ++i) {
                    const double d =
                        (x.col(i).transpose() - cent.row(res.assignments[i])).squaredNorm();
                    if (d > fd) {
                        fd = d;
                        far = i;
                    }
                }
                cent.row(j) = x.col(far).transpose();
            }
        }
        if (!changed) break;
    }
    res.centroids = cent;
    return res;
}

// Reorders latent frame columns by per-frame permutation labels (involution
// for C = 2).
template <class S>
std::array<Mat<S>, 2> reorder_latent(const std::array<Mat<S>, 2>& latents,
                                     const std::vector<int>& labels) {
    if (static_cast<Eigen::Index>(labels.size()) != latents[0].cols() ||
        latents[0].cols() != latents[1].cols())
        throw ParamError("reorder_latent: labeling length does not match frame count");
    std::array<Mat<S>, 2> out = latents;
    for (std::size_t k = 0; k < labels.size(); ++k)
        if (labels[k] == 1) {
            out[0].col(k) = latents[1].col(k);
            out[1].col(k) = latents[0].col(k);
        }
    return out;
}

enum class TrackingMode { Kmeans, Optimal };

// Maps k-means clusters to permutations (the cluster owning frame 0 becomes
// the identity), reorders and decodes. Optimal mode derives per-frame labels
// from the references via the latent L1 rule.
template <class S>
std::array<BasicWaveform<S>, 2> track_and_reconstruct(
    BasicEncoderDecoder<S>& ed, const std::array<Mat<S>, 2>& latents, const Mat<S>& embeddings,
    TrackingMode mode, const std::array<Mat<S>, 2>* ref_latents, Eigen::Index out_len,
    int sample_rate, uint64_t kmeans_seed = 0, std::vector<int>* labels_out = nullptr) {
    std::vector<int> labels;
    if (mode == TrackingMode::Optimal) {
        if (ref_latents == nullptr)
            throw ParamError("track_and_reconstruct: optimal mode requires reference latents");
        labels = tpit_latent_loss(latents, *ref_latents).frame_perms;
    } else {
        KmeansResult km = kmeans(embeddings, 2, kmeans_seed);
        const int identity_cluster = km.assignments.empty() ? 0 : km.assignments[0];
        labels.resize(km.assignments.size());
        for (std::size_t i = 0; i < labels.size(); ++i)
            labels[i] = km.assignments[i] == identity_cluster ? 0 : 1;
    }
    if (labels_out) *labels_out = labels;
    auto reordered = reorder_latent(latents, labels);
    std::array<BasicWaveform<S>, 2> out;
    for (int c = 0; c < 2; ++c) {
        out[c].sample_rate = sample_rate;
        out[c].samples = ed.decode(reordered[c], out_len);
    }
    return out;
}

}  // namespace pitsep
