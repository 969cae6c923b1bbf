#include <doctest.h>

#include <cmath>

#include "induction/constructions.hpp"
#include "induction/embeddings.hpp"
#include "induction/error.hpp"

using namespace induction;

TEST_CASE("exact layout places every family in its own block") {
  Rng rng(0);
  const std::size_t V = 4, T = 8;
  CHECK(exact_min_dim(V, T) == 21);
  const EmbeddingSet e = make_embeddings(21, V, T, EmbeddingMode::exact, rng);
  CHECK(dot(e.embed(2), e.embed(3)) == 0.0);
  for (std::size_t v = 0; v < V; ++v) {
    CHECK(e.w_E(v, v) == 1.0);
    CHECK(e.w_U(v, V + v) == 1.0);
    const Vector img = matvec(e.phi1, e.embed(v));
    CHECK(img[2 * V + v] == 1.0);
    for (std::size_t u = 0; u < V; ++u) CHECK(dot(img, e.embed(u)) == 0.0);
  }
  for (std::size_t j = 0; j < T; ++j) CHECK(e.rpe(j, 3 * V + j) == 1.0);
  CHECK(e.positional_aliased);
  CHECK(e.ape == e.rpe);

  const OrthogonalityReport r = orthogonality_report(e);
  CHECK(r.max_abs_offdiag == 0.0);
  CHECK(max_norm_deviation(e) < 1e-12);
}

TEST_CASE("exact mode rejects a dimension below the layout") {
  Rng rng(0);
  try {
    make_embeddings(20, 4, 8, EmbeddingMode::exact, rng);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::dimension_too_small);
  }
  CHECK_THROWS_AS(make_embeddings(32, 4, 8, EmbeddingMode::gaussian, rng), Error);
}

TEST_CASE("exact mode readout products are 1 on matches and 0 elsewhere") {
  Rng rng(2);
  const std::size_t V = 6, T = 10;
  auto emb = std::make_shared<EmbeddingSet>(make_embeddings(exact_min_dim(V, T), V, T, EmbeddingMode::exact, rng));
  const TransformerParams p = build_ape_induction(emb, full_vocabulary(V));
  const Matrix ov = matmul(p.wo2, emb->w_v2);
  for (std::size_t v = 0; v < V; ++v)
    for (std::size_t u = 0; u < V; ++u) CHECK(read_score(ov, emb->unembed(u), emb->embed(v)) == (u == v ? 1.0 : 0.0));
}

TEST_CASE("gaussian mode is near orthogonal with near unit images") {
  Rng rng(4);
  const std::size_t V = 65, T = 64;
  auto emb = std::make_shared<EmbeddingSet>(make_embeddings(256, V, T, EmbeddingMode::gaussian, rng));
  CHECK(max_norm_deviation(*emb) < 1e-9);
  const OrthogonalityReport r = orthogonality_report(*emb);
  CHECK(r.max_abs_offdiag < 0.4);
  CHECK(r.mean_abs_offdiag <= r.max_abs_offdiag);
  CHECK(r.mean_abs_offdiag >= 0.0);

  const TransformerParams p = build_ape_induction(emb, full_vocabulary(V));
  const Matrix ov = matmul(p.wo2, emb->w_v2);
  // Individual products fluctuate with std near 0.1, so the band is checked
  // on the root mean square over all pairs.
  double match_sq = 0.0, cross_sq = 0.0;
  for (std::size_t v = 0; v < V; ++v)
    for (std::size_t u = 0; u < V; ++u) {
      const double s = read_score(ov, emb->unembed(u), emb->embed(v));
      if (u == v) match_sq += (s - 1.0) * (s - 1.0);
      else cross_sq += s * s;
    }
  CHECK(std::sqrt(match_sq / V) < 0.15);
  CHECK(std::sqrt(cross_sq / (V * (V - 1))) < 0.15);
}

TEST_CASE("wide gaussian sets are tighter") {
  Rng rng(8);
  const EmbeddingSet e = make_embeddings(1024, 65, 32, EmbeddingMode::gaussian, rng);
  CHECK(orthogonality_report(e).max_abs_offdiag < 0.2);
}

TEST_CASE("embeddings are deterministic under a fixed seed") {
  Rng a(17), b(17);
  const EmbeddingSet x = make_embeddings(64, 10, 20, EmbeddingMode::gaussian, a);
  const EmbeddingSet y = make_embeddings(64, 10, 20, EmbeddingMode::gaussian, b);
  CHECK(x.w_E == y.w_E);
  CHECK(x.rpe == y.rpe);
  CHECK(x.phi1 == y.phi1);
}

TEST_CASE("mode names round-trip") {
  CHECK(parse_embedding_mode(to_string(EmbeddingMode::exact)) == EmbeddingMode::exact);
  CHECK(parse_embedding_mode("gaussian") == EmbeddingMode::gaussian);
  CHECK_THROWS_AS(parse_embedding_mode("sparse"), Error);
}
