#pragma once

#include <array>
#include <string>

#include "ctfs/model.hpp"

namespace ctfs {

enum class TeacherTag { general = 0, sonar_a = 1, sonar_b = 2 };

/// Phase of one training epoch: pure supervision during warm-up, afterwards
/// exactly one active teacher.
enum class ActivePhase { supervised, general, sonar_a, sonar_b };

inline const char* to_string(ActivePhase p) {
  switch (p) {
    case ActivePhase::supervised: return "supervised";
    case ActivePhase::general: return "general";
    case ActivePhase::sonar_a: return "sonar_a";
    case ActivePhase::sonar_b: return "sonar_b";
  }
  return "?";
}

inline const char* to_string(TeacherTag t) {
  switch (t) {
    case TeacherTag::general: return "general";
    case TeacherTag::sonar_a: return "sonar_a";
    case TeacherTag::sonar_b: return "sonar_b";
  }
  return "?";
}

inline TeacherTag teacher_tag_from_string(const std::string& s) {
  if (s == "general") return TeacherTag::general;
  if (s == "sonar_a") return TeacherTag::sonar_a;
  if (s == "sonar_b") return TeacherTag::sonar_b;
  throw std::invalid_argument("unknown teacher tag: " + s);
}

/// Epoch-indexed rotation: supervised while e < E, then the fixed cycle
/// general -> sonar_a -> sonar_b keyed on (e - E) mod 3.
inline ActivePhase schedule(long epoch, long warmup_epochs) {
  if (epoch < 0 || warmup_epochs < 0)
    throw std::invalid_argument("schedule: epoch and warmup must be non-negative");
  if (epoch < warmup_epochs) return ActivePhase::supervised;
  switch ((epoch - warmup_epochs) % 3) {
    case 0: return ActivePhase::general;
    case 1: return ActivePhase::sonar_a;
    default: return ActivePhase::sonar_b;
  }
}

inline TeacherTag phase_tag(ActivePhase p) {
  switch (p) {
    case ActivePhase::general: return TeacherTag::general;
    case ActivePhase::sonar_a: return TeacherTag::sonar_a;
    case ActivePhase::sonar_b: return TeacherTag::sonar_b;
    default: throw std::invalid_argument("phase_tag: supervised phase has no teacher");
  }
}

/// Three weight-averaged teacher replicas sharing the student architecture.
struct TeacherBank {
  std::array<ModelParams, 3> teachers;
  double ema_decay = 0.999;
  long warmup_epochs = 10;

  static TeacherBank from_student(const ModelParams& student, double ema_decay,
                                  long warmup_epochs) {
    if (!(ema_decay > 0.0 && ema_decay < 1.0) && ema_decay != 0.0 && ema_decay != 1.0)
      throw std::invalid_argument("TeacherBank: ema_decay must be in [0,1]");
    TeacherBank bank;
    bank.teachers = {student, student, student};
    bank.ema_decay = ema_decay;
    bank.warmup_epochs = warmup_epochs;
    return bank;
  }

  ModelParams& operator[](TeacherTag t) { return teachers[static_cast<size_t>(t)]; }
  const ModelParams& operator[](TeacherTag t) const {
    return teachers[static_cast<size_t>(t)];
  }
};

/// EMA update of exactly one teacher: theta_t <- m*theta_t + (1-m)*theta_s.
/// The other two teachers are untouched.
inline void ema_update(TeacherBank& bank, TeacherTag tag, const ModelParams& student) {
  ModelParams& teacher = bank[tag];
  if (!teacher.same_structure(student))
    throw std::invalid_argument("ema_update: teacher/student parameter shapes differ");
  const double m = bank.ema_decay;
  for (size_t a = 0; a < teacher.arrays.size(); ++a) {
    auto& tv = teacher.arrays[a].values;
    const auto& sv = student.arrays[a].values;
    for (size_t i = 0; i < tv.size(); ++i) tv[i] = m * tv[i] + (1.0 - m) * sv[i];
  }
}

/// Gradient-free prediction from the tagged teacher.
inline ProbMap teacher_predict(const SegNet& net, const TeacherBank& bank, TeacherTag tag,
                               const Intensity& weak_img) {
  return net.predict(bank[tag], weak_img);
}

/// Hard pseudo-label: per-pixel argmax, lowest class index wins ties.
inline MaskImage make_pseudo_label(const ProbMap& prob) {
  MaskImage out(prob.rows(), prob.cols());
  const size_t plane = prob.plane();
  for (size_t i = 0; i < plane; ++i) {
    int best = 0;
    float best_v = prob.data()[i];
    for (int c = 1; c < prob.channels(); ++c) {
      const float v = prob.data()[c * plane + i];
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    out.data()[i] = static_cast<uint8_t>(best);
  }
  return out;
}

}  // namespace ctfs
