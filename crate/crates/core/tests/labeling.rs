use econgrasp::geometry::{
    compose_rotation, find_contacts, force_closure, gripper_collision, Frame, GraspPose,
    GripperModel, Vec3, ViewSphere,
};
use econgrasp::synth::{label_object, make_object, Shape, SyntheticObject, INFEASIBLE};

/// Two-wall plate in the gripper frame of `(view, angle 1)`: walls at
/// `x = ±0.01`, the grasp point at the local origin on the top rim.
fn plate(sphere: &ViewSphere, view: usize) -> SyntheticObject {
    let rot = compose_rotation(sphere, view, 1, 12).unwrap();
    let mut local_pts = vec![Vec3::zeros()];
    let mut local_nrm = vec![Vec3::new(0.0, 0.0, -1.0)];
    for i in 0..7 {
        for j in 0..10 {
            let y = -0.015 + 0.005 * i as f64;
            let z = 0.002 + 0.005 * j as f64;
            for side in [-1.0, 1.0] {
                local_pts.push(Vec3::new(0.01 * side, y, z));
                local_nrm.push(Vec3::new(side, 0.0, 0.0));
            }
        }
    }
    SyntheticObject {
        shape: Shape::Box {
            x: 0.02,
            y: 0.03,
            z: 0.05,
        },
        density: 0.0,
        seed: 0,
        points: local_pts.iter().map(|p| rot * p).collect(),
        normals: local_nrm.iter().map(|n| rot * n).collect(),
    }
}

#[test]
fn antipodal_plate_labels_lowest_friction() {
    let sphere = ViewSphere::generate(60).unwrap();
    let gripper = GripperModel::default();
    let view = 23;
    let obj = plate(&sphere, view);
    let labels = label_object(&obj, &sphere, &gripper).unwrap();
    for d in 0..4 {
        let e = labels.entry(0, view - 1, 0, d);
        assert!(!e.collide);
        assert_eq!(e.mu, 0, "depth {d}: friction index {}", e.mu);
        let width = e.width as f64;
        assert!((width - 0.022).abs() < 1e-6, "width {width}");
    }
    let best = labels.view(0, view - 1).iter().map(|e| e.mu).min().unwrap();
    assert_eq!(gripper.friction_grid[best as usize], 0.1);
}

#[test]
fn oversized_sphere_is_infeasible() {
    let sphere = ViewSphere::generate(60).unwrap();
    let gripper = GripperModel::default();
    let obj = make_object(
        Shape::Sphere {
            radius: gripper.max_width,
        },
        3000.0,
        4,
    )
    .unwrap();
    let labels = label_object(&obj, &sphere, &gripper).unwrap();
    assert_eq!(labels.entries.len(), obj.len() * 60 * 12 * 4);
    assert!(labels.entries.iter().all(|e| e.mu == INFEASIBLE));
}

#[test]
fn labels_follow_points_under_permutation() {
    let sphere = ViewSphere::generate(20).unwrap();
    let gripper = GripperModel::default();
    let obj = make_object(
        Shape::Box {
            x: 0.04,
            y: 0.03,
            z: 0.05,
        },
        8000.0,
        12,
    )
    .unwrap();
    let n = obj.len();
    let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
    let mut seen = perm.clone();
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), n, "7 must be coprime with {n}");
    let permuted = SyntheticObject {
        points: perm.iter().map(|&i| obj.points[i]).collect(),
        normals: perm.iter().map(|&i| obj.normals[i]).collect(),
        ..obj.clone()
    };
    let a = label_object(&obj, &sphere, &gripper).unwrap();
    let b = label_object(&permuted, &sphere, &gripper).unwrap();
    for (new, &old) in perm.iter().enumerate() {
        assert_eq!(b.point(new), a.point(old));
    }
}

#[test]
fn stored_friction_is_minimal_and_reproducible() {
    let sphere = ViewSphere::generate(30).unwrap();
    let gripper = GripperModel::default();
    let obj = make_object(
        Shape::Cylinder {
            radius: 0.02,
            height: 0.05,
        },
        6000.0,
        3,
    )
    .unwrap();
    let labels = label_object(&obj, &sphere, &gripper).unwrap();
    let mut feasible = 0;
    for p in 0..obj.len() {
        for v in 0..30 {
            for a in 0..12 {
                for d in 0..4 {
                    let e = labels.entry(p, v, a, d);
                    if !e.is_feasible() {
                        continue;
                    }
                    feasible += 1;
                    let g = GraspPose {
                        frame: Frame::Scene,
                        center: obj.points[p],
                        view: v + 1,
                        angle: a + 1,
                        depth: d + 1,
                        width: e.width as f64,
                        score: 1.0,
                    };
                    let rep = gripper_collision(&g, &obj.points, &sphere, &gripper).unwrap();
                    assert!(!rep.colliding);
                    let pair = find_contacts(&g, &obj.points, &obj.normals, &sphere, &gripper)
                        .unwrap()
                        .expect("feasible entry has contacts at its stored width");
                    let axis = compose_rotation(&sphere, v + 1, a + 1, 12)
                        .unwrap()
                        .column(0)
                        .into_owned();
                    let mu = gripper.friction_grid[e.mu as usize];
                    assert!(force_closure(&pair, &axis, mu).unwrap());
                    if e.mu > 0 {
                        let lower = gripper.friction_grid[e.mu as usize - 1];
                        assert!(!force_closure(&pair, &axis, lower).unwrap());
                    }
                }
            }
        }
    }
    assert!(feasible > 100, "only {feasible} feasible entries");
}
