#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "ctfs/model.hpp"
#include "ctfs/teacher_bank.hpp"

namespace ctfs {

inline constexpr uint32_t kCheckpointMagic = 0x53465443;  // "CTFS"
inline constexpr uint32_t kCheckpointVersion = 1;

/// Full training state: student, optimizer, best-validation bookkeeping and,
/// once the warm-up has ended, the three teachers with their rotation phase.
struct Checkpoint {
  SegNetConfig net;
  long epoch_next = 0;  // first epoch that has not been run yet
  ModelParams student;
  AdamWState opt;
  double best_val_miou = -1.0;
  long best_epoch = -1;
  bool has_bank = false;
  TeacherBank bank;
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  io::write_pod(out, kCheckpointMagic);
  io::write_pod(out, kCheckpointVersion);
  io::write_pod<int32_t>(out, ck.net.in_channels);
  io::write_pod<int32_t>(out, ck.net.num_classes);
  for (int w : ck.net.widths) io::write_pod<int32_t>(out, w);
  io::write_pod<int64_t>(out, ck.epoch_next);
  io::write_params(out, ck.student);
  io::write_pod<int64_t>(out, ck.opt.step);
  io::write_params(out, ck.opt.m);
  io::write_params(out, ck.opt.v);
  io::write_pod<double>(out, ck.best_val_miou);
  io::write_pod<int64_t>(out, ck.best_epoch);
  io::write_pod<uint8_t>(out, ck.has_bank ? 3 : 0);
  if (ck.has_bank) {
    io::write_pod<double>(out, ck.bank.ema_decay);
    io::write_pod<int64_t>(out, ck.bank.warmup_epochs);
    for (const auto& t : ck.bank.teachers) io::write_params(out, t);
  }
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  if (io::read_pod<uint32_t>(in) != kCheckpointMagic)
    throw DataError("not a checkpoint file: " + path);
  const uint32_t version = io::read_pod<uint32_t>(in);
  if (version != kCheckpointVersion)
    throw DataError("checkpoint format version mismatch in " + path + ": got " +
                    std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  Checkpoint ck;
  ck.net.in_channels = io::read_pod<int32_t>(in);
  ck.net.num_classes = io::read_pod<int32_t>(in);
  for (int& w : ck.net.widths) w = io::read_pod<int32_t>(in);
  ck.epoch_next = io::read_pod<int64_t>(in);
  ck.student = io::read_params(in);
  ck.opt.step = io::read_pod<int64_t>(in);
  ck.opt.m = io::read_params(in);
  ck.opt.v = io::read_params(in);
  ck.best_val_miou = io::read_pod<double>(in);
  ck.best_epoch = io::read_pod<int64_t>(in);
  const uint8_t teachers = io::read_pod<uint8_t>(in);
  if (teachers == 3) {
    ck.has_bank = true;
    ck.bank.ema_decay = io::read_pod<double>(in);
    ck.bank.warmup_epochs = io::read_pod<int64_t>(in);
    for (auto& t : ck.bank.teachers) t = io::read_params(in);
  }
  return ck;
}

}  // namespace ctfs
