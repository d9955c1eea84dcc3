#pragma once

#include <random>

namespace seqprior {

template <class Rng>
ActionMatrix generate_sequence(SequenceClass cls, int length, int dim, int period, Rng& rng) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  ActionMatrix seq(length, dim);
  switch (cls) {
    case SequenceClass::kConstant: {
      Eigen::RowVectorXd value(dim);
      for (int d = 0; d < dim; ++d) value(d) = unif(rng);
      for (int t = 0; t < length; ++t) seq.row(t) = value;
      break;
    }
    case SequenceClass::kBangBang: {
      // alternate between the extremes, independent phase per dimension
      for (int d = 0; d < dim; ++d) {
        const int phase = coin(rng) ? 1 : 0;
        for (int t = 0; t < length; ++t) seq(t, d) = ((t + phase) % 2 == 0) ? -1.0 : 1.0;
      }
      break;
    }
    case SequenceClass::kPeriodic: {
      ActionMatrix pattern(period, dim);
      for (int i = 0; i < period; ++i)
        for (int d = 0; d < dim; ++d) pattern(i, d) = unif(rng);
      for (int t = 0; t < length; ++t) seq.row(t) = pattern.row(t % period);
      break;
    }
    case SequenceClass::kRandom:
      for (int t = 0; t < length; ++t)
        for (int d = 0; d < dim; ++d) seq(t, d) = unif(rng);
      break;
  }
  return seq;
}

}  // namespace seqprior
