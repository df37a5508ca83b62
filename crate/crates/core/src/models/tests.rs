use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::SisError;
use crate::mesh::{Mesh, Standardizer};
use crate::nn::gradcheck::{check_gradients, sample_indices};
use crate::nn::{decode_checkpoint, encode_checkpoint, FourierEncoding};
use crate::sphere_geom::make_icosphere;
use crate::sphere_param::{mesh_fingerprint, SphericalEmbedding};
use crate::Vec3;

fn identity_part(mesh: &Mesh, enc: FourierEncoding) -> PartTemplate {
    let emb = SphericalEmbedding {
        sphere_points: mesh.vertices().to_vec(),
        source_mesh_id: mesh_fingerprint(mesh),
    };
    let n = mesh.vertex_count();
    PartTemplate::new(mesh, &emb, (0..n).collect(), vec![false; n], enc).unwrap()
}

fn bumpy(mesh: &Mesh, a: f64) -> Vec<Vec3> {
    mesh.vertices()
        .iter()
        .map(|p| p * (1.0 + a * (3.0 * p.z).sin()))
        .collect()
}

fn flat_params(model: &mut SisModel<f64>) -> (Vec<f64>, Vec<usize>) {
    let t = model.tensors_mut();
    let shapes = t.iter().map(|s| s.len()).collect();
    (t.iter().flat_map(|s| s.iter().copied()).collect(), shapes)
}

fn set_params(model: &mut SisModel<f64>, p: &[f64], shapes: &[usize]) {
    let mut off = 0;
    for (t, n) in model.tensors_mut().into_iter().zip(shapes) {
        t.copy_from_slice(&p[off..off + n]);
        off += n;
    }
}

#[test]
fn decoder_widths_follow_the_kind() {
    let enc = FourierEncoding::default();
    assert_eq!(ModelKind::Local.decoder_input_width(&enc), 299);
    assert_eq!(ModelKind::Global.decoder_input_width(&enc), 104);
    assert_eq!(ModelKind::LocalNoFusion.decoder_input_width(&enc), 104);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let m = SisModel::<f32>::new(
        ModelKind::Local,
        3,
        0,
        enc,
        Standardizer::identity(),
        &mut rng,
    )
    .unwrap();
    assert_eq!(m.decoders.len(), 3);
    assert_eq!(
        m.decoders[0].layer_dims(),
        &[299, 131, 131, 131, 131, 131, 3]
    );
    assert_eq!(m.decoders[0].skip_at(), Some(3));
}

#[test]
fn untrained_models_refuse_to_decode() {
    let enc = FourierEncoding::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = SisModel::<f32>::new(
        ModelKind::Global,
        1,
        12,
        enc,
        Standardizer::identity(),
        &mut rng,
    )
    .unwrap();
    let ico = make_icosphere(0).unwrap();
    let z = m.encode_global(ico.vertices()).unwrap();
    let c = crate::sphere_param::SphericalCoord {
        theta_hat: 0.3,
        phi_hat: 0.6,
    };
    assert!(matches!(
        m.decode_vertex_global(0, &z, &c),
        Err(SisError::Untrained)
    ));
}

#[test]
fn decoding_is_deterministic_and_finite_on_a_dense_grid() {
    let enc = FourierEncoding::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ico = make_icosphere(1).unwrap();
    let mut m = SisModel::<f32>::new(
        ModelKind::Local,
        1,
        0,
        enc,
        Standardizer::identity(),
        &mut rng,
    )
    .unwrap();
    m.trained = true;
    let field = m.local_field(&bumpy(&ico, 0.1), ico.vertices()).unwrap();
    let grid = make_icosphere(4).unwrap();
    let coords = SphericalEmbedding {
        sphere_points: grid.vertices().to_vec(),
        source_mesh_id: String::new(),
    }
    .coords()
    .unwrap();
    let a = m.decode_local(0, &field, &coords).unwrap();
    assert_eq!(a.len(), 2562);
    assert!(a.iter().all(|p| p.iter().all(|v| v.is_finite())));
    assert_eq!(m.decode_local(0, &field, &coords).unwrap(), a);
    let cf = coarse_feature(&field, &coords[7]).unwrap();
    let z = fuse_feature(
        &cf.z_hat,
        &cf.corner_features[0],
        &cf.corner_features[1],
        &cf.corner_features[2],
        cf.lambdas,
    );
    let one = m.decode_vertex_local(0, &z, &coords[7]).unwrap();
    assert!((one - a[7]).norm() < 1e-5);
}

#[test]
fn local_gradients_match_finite_differences() {
    let enc = FourierEncoding::new(3);
    let ico = make_icosphere(1).unwrap();
    let part = identity_part(&ico, enc);
    let xyz = bumpy(&ico, 0.2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sample: Vec<usize> = sample_indices(ico.vertex_count(), 14, &mut rng);
    let inputs: Vec<Vec3> = sample.iter().map(|&i| xyz[i]).collect();
    let (plan, rows) = LossPlan::around(&part.nbrs, None, &[0, 17, 30]).unwrap();
    let queries = vec![PartQuery { plan, rows }];
    for kind in [ModelKind::Local, ModelKind::LocalNoFusion] {
        let mut m =
            SisModel::<f64>::new(kind, 1, 0, enc, Standardizer::identity(), &mut rng).unwrap();
        let mut g = m.zero_grads();
        let parts = [part.clone()];
        let (s, inp) = ([sample.clone()], [inputs.clone()]);
        m.local_item_grad(&parts, &xyz, &s, &inp, &queries, 0.05, &mut g)
            .unwrap();
        let analytic: Vec<f64> = g.tensors().concat();
        let (base, shapes) = flat_params(&mut m);
        let idx = sample_indices(base.len(), 20, &mut rng);
        let mut f = |p: &[f64]| {
            set_params(&mut m, p, &shapes);
            let mut scratch = m.zero_grads();
            m.local_item_grad(&parts, &xyz, &s, &inp, &queries, 0.05, &mut scratch)
                .unwrap()
                .total
        };
        let rep = check_gradients(&mut f, &base, &analytic, &idx, 1e-5);
        assert!(rep.max_rel_error < 1e-4, "{kind:?}: {}", rep.max_rel_error);
    }
}

#[test]
fn global_gradients_match_finite_differences() {
    let enc = FourierEncoding::new(3);
    let ico = make_icosphere(1).unwrap();
    let part = identity_part(&ico, enc);
    let xyz = bumpy(&ico, 0.2);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut m = SisModel::<f64>::new(
        ModelKind::Global,
        1,
        ico.vertex_count(),
        enc,
        Standardizer::identity(),
        &mut rng,
    )
    .unwrap();
    let queries = vec![PartQuery {
        plan: LossPlan::full(&part.nbrs, None).unwrap(),
        rows: (0..ico.vertex_count()).collect(),
    }];
    let parts = [part];
    let mut g = m.zero_grads();
    m.global_item_grad(&parts, &xyz, &queries, 0.05, &mut g)
        .unwrap();
    let analytic: Vec<f64> = g.tensors().concat();
    let (base, shapes) = flat_params(&mut m);
    let idx = sample_indices(base.len(), 20, &mut rng);
    let mut f = |p: &[f64]| {
        set_params(&mut m, p, &shapes);
        let mut scratch = m.zero_grads();
        m.global_item_grad(&parts, &xyz, &queries, 0.05, &mut scratch)
            .unwrap()
            .total
    };
    let rep = check_gradients(&mut f, &base, &analytic, &idx, 1e-5);
    assert!(rep.max_rel_error < 1e-4, "{}", rep.max_rel_error);
}

#[test]
fn gather_fills_with_ring_means() {
    let ico = make_icosphere(1).unwrap();
    let n = ico.vertex_count();
    let emb = SphericalEmbedding {
        sphere_points: ico.vertices().to_vec(),
        source_mesh_id: mesh_fingerprint(&ico),
    };
    let mut filled = vec![false; n];
    filled[n - 1] = true;
    let part = PartTemplate::new(
        &ico,
        &emb,
        (0..n - 1).collect(),
        filled,
        FourierEncoding::default(),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let orig: Vec<Vec3> = (0..n - 1)
        .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()))
        .collect();
    let got = part.gather(&orig);
    let ring = part.nbrs.neighbors(n - 1);
    let want = ring.iter().fold(Vec3::zeros(), |a, &j| a + orig[j]) / ring.len() as f64;
    assert!((got[n - 1] - want).norm() < 1e-15);
}

#[test]
fn checkpoint_round_trip_preserves_the_model() {
    let enc = FourierEncoding::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for kind in [
        ModelKind::Global,
        ModelKind::Local,
        ModelKind::LocalNoFusion,
    ] {
        let mut m = SisModel::<f32>::new(
            kind,
            2,
            42,
            enc,
            Standardizer::identity().with_unit_scale(2.5),
            &mut rng,
        )
        .unwrap();
        m.trained = true;
        let ck = m
            .to_checkpoint(None, serde_json::json!({"note": 1}))
            .unwrap();
        let back = SisModel::from_checkpoint(
            &decode_checkpoint(&encode_checkpoint(&ck).unwrap()).unwrap(),
        )
        .unwrap();
        assert_eq!(back, m);
    }
}
