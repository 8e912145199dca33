#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "pitsep/models.hpp"
#include "pitsep/permtrack.hpp"
#include "test_util.hpp"

using namespace pitsep;
using testutil::random_mat;
using testutil::random_vec;

TEST_CASE("kmeans recovers two well-separated blobs") {
    std::mt19937_64 rng(1);
    const long D = 3, K = 60;
    Mat<double> emb(D, K);
    std::vector<int> truth(K);
    std::normal_distribution<double> nd(0.0, 0.05);
    for (long k = 0; k < K; ++k) {
        truth[k] = static_cast<int>(k % 2);
        for (long d = 0; d < D; ++d)
            emb(d, k) = (truth[k] == 0 ? 1.0 : -1.0) * (d == 0 ? 1.0 : 0.2) + nd(rng);
    }
    KmeansResult r = kmeans(emb, 2, 7);
    REQUIRE(r.assignments.size() == static_cast<std::size_t>(K));
    // Cluster indices are arbitrary; check agreement up to relabeling.
    long agree = 0;
    for (long k = 0; k < K; ++k)
        if (r.assignments[k] == r.assignments[0] ? truth[k] == truth[0] : truth[k] != truth[0])
            ++agree;
    CHECK(agree == K);
    CHECK(r.inertia < 0.1 * K);
    CHECK(r.iterations >= 1);
}

TEST_CASE("kmeans is deterministic for a fixed seed") {
    std::mt19937_64 rng(2);
    Mat<double> emb = random_mat<double>(4, 40, rng);
    KmeansResult a = kmeans(emb, 2, 13);
    KmeansResult b = kmeans(emb, 2, 13);
    CHECK(a.assignments == b.assignments);
    CHECK(a.inertia == b.inertia);
}

TEST_CASE("kmeans validates inputs") {
    Mat<double> tiny = Mat<double>::Ones(2, 1);
    CHECK_THROWS_AS(kmeans(tiny, 2, 0), ParamError);
    Mat<double> ok = Mat<double>::Random(2, 8);
    CHECK_THROWS_AS(kmeans(ok, 0, 0), ParamError);
}

TEST_CASE("reorder_latent is an involution") {
    std::mt19937_64 rng(3);
    std::array<Mat<double>, 2> lat = {random_mat<double>(5, 6, rng), random_mat<double>(5, 6, rng)};
    std::vector<int> labels = {0, 1, 0, 0, 1, 1};
    auto once = reorder_latent(lat, labels);
    CHECK(once[0].col(1) == lat[1].col(1));
    CHECK(once[1].col(1) == lat[0].col(1));
    CHECK(once[0].col(0) == lat[0].col(0));
    auto twice = reorder_latent(once, labels);
    CHECK((twice[0] - lat[0]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((twice[1] - lat[1]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("optimal tracking undoes a known frame shuffle") {
    std::mt19937_64 rng(4);
    BasicEncoderDecoder<double> ed(8, 4, 12, rng);
    const long K = 10;
    // Reference latents, then estimates that equal the references with some
    // frames swapped: optimal tracking must recover the clean streams.
    std::array<Mat<double>, 2> refs = {random_mat<double>(12, K, rng).cwiseAbs(),
                                       random_mat<double>(12, K, rng).cwiseAbs()};
    std::vector<int> shuffle = {0, 1, 1, 0, 1, 0, 0, 1, 1, 0};
    auto est = reorder_latent(refs, shuffle);
    std::vector<int> labels;
    Mat<double> no_emb;
    const Eigen::Index out_len = (K - 1) * 4 + 8;
    auto out = track_and_reconstruct(ed, est, no_emb, TrackingMode::Optimal, &refs, out_len, 8000,
                                     0, &labels);
    CHECK(labels == shuffle);
    auto clean0 = ed.decode(refs[0], out_len);
    for (Eigen::Index t = 0; t < out_len; ++t)
        CHECK(out[0].samples[t] == doctest::Approx(clean0[t]).epsilon(1e-9));
}

TEST_CASE("kmeans tracking maps the first frame's cluster to identity") {
    std::mt19937_64 rng(5);
    BasicEncoderDecoder<double> ed(8, 4, 6, rng);
    const long K = 12;
    std::array<Mat<double>, 2> refs = {random_mat<double>(6, K, rng).cwiseAbs(),
                                       random_mat<double>(6, K, rng).cwiseAbs()};
    std::vector<int> shuffle = {0, 0, 1, 1, 0, 1, 0, 1, 1, 0, 0, 1};
    auto est = reorder_latent(refs, shuffle);
    // Embeddings that encode the shuffle exactly: one blob per label.
    Mat<double> emb(2, K);
    for (long k = 0; k < K; ++k) {
        emb(0, k) = shuffle[k] == 0 ? 1.0 : -1.0;
        emb(1, k) = shuffle[k] == 0 ? -1.0 : 1.0;
    }
    std::vector<int> labels;
    const Eigen::Index out_len = (K - 1) * 4 + 8;
    auto out = track_and_reconstruct<double>(ed, est, emb, TrackingMode::Kmeans, nullptr, out_len, 8000, uint64_t(3),
                                     &labels);
    // First frame has shuffle label 0, so its cluster becomes "identity" and
    // the recovered labels equal the shuffle exactly.
    CHECK(labels == shuffle);
    auto clean1 = ed.decode(refs[1], out_len);
    for (Eigen::Index t = 0; t < out_len; ++t)
        CHECK(out[1].samples[t] == doctest::Approx(clean1[t]).epsilon(1e-9));
}
