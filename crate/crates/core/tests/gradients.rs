use splatsem::gradcheck::{check_feature_loss, check_fuse, check_voxel_weights, check_warp, GradcheckReport};

fn assert_all_pass(reports: impl Iterator<Item = GradcheckReport>) {
    for r in reports {
        assert!(
            r.passed,
            "{} seed {} failed: {:?}",
            r.op,
            r.seed,
            r.entries
        );
    }
}

#[test]
fn fuse_gradients_over_100_seeds() {
    assert_all_pass((0..100).map(|s| check_fuse(s, [6, 8, 4]).unwrap()));
}

#[test]
fn warp_gradients_over_100_seeds() {
    assert_all_pass((0..100).map(|s| check_warp(s, [8, 8, 4], 0.05).unwrap()));
}

#[test]
fn voxel_weight_gradients_over_100_seeds() {
    assert_all_pass((0..100).map(|s| check_voxel_weights(s, [4, 3]).unwrap()));
}

#[test]
fn feature_loss_gradients_over_100_seeds() {
    assert_all_pass((0..100).map(|s| check_feature_loss(s, [8, 8, 6]).unwrap()));
}
