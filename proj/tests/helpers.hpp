#pragma once

#include <optional>
#include <string>
#include <vector>

#include "iiwgee/core_model.hpp"

namespace testing_support {

inline iiwgee::SubjectRecord subject(std::string id, std::vector<double> times, std::vector<double> ys,
                                     std::optional<double> dropout = {}, std::optional<double> censor = {},
                                     std::optional<double> competing = {}) {
  iiwgee::SubjectRecord s;
  s.id = std::move(id);
  s.visit_times = std::move(times);
  s.outcomes = std::move(ys);
  s.dropout_time = dropout;
  s.censor_time = censor;
  s.competing_time = competing;
  return s;
}

inline iiwgee::FeatureTerm last_outcome(iiwgee::Transform tr = iiwgee::Transform::identity,
                                        std::optional<double> fallback = {}) {
  iiwgee::FeatureTerm t;
  t.source = iiwgee::FeatureSource::last_outcome;
  t.transform = tr;
  t.default_value = fallback;
  return t;
}

inline iiwgee::FeatureTerm baseline(std::string column) {
  iiwgee::FeatureTerm t;
  t.source = iiwgee::FeatureSource::baseline;
  t.column = std::move(column);
  return t;
}

inline iiwgee::FeatureTerm intercept() {
  iiwgee::FeatureTerm t;
  t.source = iiwgee::FeatureSource::constant;
  return t;
}

}  // namespace testing_support
