// Minimal in-process tour: one toy object, a few reference grasps from energy
// minimization, and their evaluation.

#include <cstdio>

#include "dgforge/dgforge.hpp"

int main() {
  using namespace dgforge;
  RunConfig cfg;
  cfg.toy.grasps_per_object = 3;
  cfg.toy.test_fraction = 0.0;
  const auto model = default_hand(cfg.hand);
  std::printf("hand: %d joints, %d links, %zu surface samples\n", model.num_joints(), model.num_links(),
              model.num_points());

  const ToyObjectResult obj = generate_toy_object(0, cfg, model, 7);
  std::printf("object %s: %zu grasps accepted out of %d attempts\n", obj.spec.id.c_str(), obj.grasps.size(),
              obj.attempts);

  const auto asset = ObjectAsset::make(obj.spec.id, obj.mesh, cfg.objects);
  for (const auto& g : obj.grasps) {
    const HandPose pose(g.pose);
    const EvalReport r = evaluate_grasp(pose, model, *asset->index, cfg.eval);
    const ConstraintBreakdown c = evaluate_constraints(pose, model, *asset->index, cfg.constraints, false);
    std::printf("  pen %.2f mm, pen_cyl %.2f mm, contacts %zu, suc6 %d | spf %.4f erf %.4f srf %.4f\n", r.pen_mm,
                r.pen_cyl_mm, r.num_contacts, r.suc6 ? 1 : 0, c.spf.value, c.erf.value, c.srf.value);
  }
  return 0;
}
