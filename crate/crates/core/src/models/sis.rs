//! Conditioned decoders over spherical coordinates, one per submesh.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoders::{new_local_encoder, GlobalEncoder, GlobalFeature, GlobalGrads, LATENT_WIDTH};
use super::fusion::{
    decoder_rows, decoder_rows_backward, encode_local_features_train, fused_width, local_backward,
    local_encoder_input, FusedFeature, LocalFeatureField, Located,
};
use super::losses::{LossPlan, LossValue};
use crate::error::{Result, SisError};
use crate::mesh::{one_ring, Mesh, NeighborStructure, Standardizer};
use crate::nn::{AdamState, Checkpoint, FourierEncoding, Mlp, MlpGrads, NamedNetwork, Real};
use crate::sphere_geom::triangulate_unit_points;
use crate::sphere_param::{from_spherical_coords, SphericalCoord, SphericalEmbedding};
use crate::Vec3;

pub const DECODER_WIDTH: usize = 131;
pub const DECODER_LAYERS: usize = 6;
pub const DECODER_SKIP: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Global,
    Local,
    /// Local conditioning on the blended feature alone.
    LocalNoFusion,
}

impl ModelKind {
    /// Width of the conditioning feature fed to the decoder.
    pub fn feature_width(self) -> usize {
        match self {
            ModelKind::Global | ModelKind::LocalNoFusion => LATENT_WIDTH,
            ModelKind::Local => fused_width(LATENT_WIDTH),
        }
    }

    pub fn decoder_input_width(self, enc: &FourierEncoding) -> usize {
        self.feature_width() + enc.width()
    }

    pub fn is_local(self) -> bool {
        self != ModelKind::Global
    }
}

/// `[input, 131 x 5, 3]` with the input re-injected at layer 3.
pub fn decoder_dims(input: usize) -> Vec<usize> {
    let mut d = vec![input];
    d.extend([DECODER_WIDTH; DECODER_LAYERS - 1]);
    d.push(3);
    d
}

/// Template data for one genus-0 submesh.
#[derive(Debug, Clone)]
pub struct PartTemplate {
    pub points: Vec<Vec3>,
    pub coords: Vec<SphericalCoord>,
    /// Local -> original vertex index for the leading non-filled vertices.
    pub index_map: Vec<usize>,
    pub filled: Vec<bool>,
    pub nbrs: NeighborStructure,
    /// Fourier encoding of every coordinate, row-major.
    encoded: Vec<f64>,
    encoding: FourierEncoding,
}

impl PartTemplate {
    pub fn new(
        submesh: &Mesh,
        emb: &SphericalEmbedding,
        index_map: Vec<usize>,
        filled: Vec<bool>,
        encoding: FourierEncoding,
    ) -> Result<Self> {
        let n = submesh.vertex_count();
        if emb.len() != n
            || filled.len() != n
            || filled.iter().filter(|f| !**f).count() != index_map.len()
        {
            return Err(SisError::Dimension(format!(
                "submesh with {n} vertices, embedding {}, flags {}, index map {}",
                emb.len(),
                filled.len(),
                index_map.len()
            )));
        }
        if filled[..index_map.len()].iter().any(|&f| f) {
            return Err(SisError::InvalidMesh(
                "filled vertices must follow original ones".into(),
            ));
        }
        let coords = emb.coords()?;
        let mut encoded = vec![0.0; n * encoding.width()];
        for (c, row) in coords
            .iter()
            .zip(encoded.chunks_exact_mut(encoding.width()))
        {
            encoding.encode_into(c, row);
        }
        Ok(PartTemplate {
            points: emb.sphere_points.clone(),
            coords,
            index_map,
            filled,
            nbrs: one_ring(submesh),
            encoded,
            encoding,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.points.len()
    }

    pub fn original_count(&self) -> usize {
        self.index_map.len()
    }

    pub fn encoding(&self) -> FourierEncoding {
        self.encoding
    }

    /// Part positions from a full mesh; filled vertices take the mean of
    /// their one-ring, which reproduces the fill centroid.
    pub fn gather(&self, original: &[Vec3]) -> Vec<Vec3> {
        let mut out: Vec<Vec3> = self.index_map.iter().map(|&i| original[i]).collect();
        for v in self.original_count()..self.vertex_count() {
            let ring = self.nbrs.neighbors(v);
            let sum = ring
                .iter()
                .filter(|&&j| j < self.original_count())
                .fold(Vec3::zeros(), |a, &j| a + out[j]);
            let k = ring
                .iter()
                .filter(|&&j| j < self.original_count())
                .count()
                .max(1);
            out.push(sum / k as f64);
        }
        out
    }

    fn encoded_rows<T: Real>(&self, rows: &[usize]) -> Vec<T> {
        let w = self.encoding.width();
        let mut out = Vec::with_capacity(rows.len() * w);
        for &r in rows {
            out.extend(
                self.encoded[r * w..(r + 1) * w]
                    .iter()
                    .map(|&v| T::from_f64(v)),
            );
        }
        out
    }
}

/// Prediction rows of one part and the loss terms over them.
#[derive(Debug, Clone)]
pub struct PartQuery {
    pub plan: LossPlan,
    /// Part vertex id of each prediction row.
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SisGrads<T: Real> {
    pub global: Option<GlobalGrads<T>>,
    pub local: Option<MlpGrads<T>>,
    pub decoders: Vec<MlpGrads<T>>,
}

impl<T: Real> SisGrads<T> {
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut t = Vec::new();
        if let Some(g) = &self.global {
            t.extend(g.tensors());
        }
        if let Some(l) = &self.local {
            t.extend(l.tensors());
        }
        for d in &self.decoders {
            t.extend(d.tensors());
        }
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Vec<T>> {
        fn push<'a, T: Real>(g: &'a mut MlpGrads<T>, t: &mut Vec<&'a mut Vec<T>>) {
            for (w, b) in g.weights.iter_mut().zip(g.biases.iter_mut()) {
                t.push(w);
                t.push(b);
            }
        }
        let mut t = Vec::new();
        if let Some(g) = &mut self.global {
            push(&mut g.point, &mut t);
            push(&mut g.head, &mut t);
        }
        if let Some(l) = &mut self.local {
            push(l, &mut t);
        }
        for d in &mut self.decoders {
            push(d, &mut t);
        }
        t
    }

    /// Adds `other` into `self` element by element.
    pub fn accumulate(&mut self, other: &SisGrads<T>) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += *y);
        }
    }

    pub fn scale(&mut self, s: T) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SisModel<T: Real = f32> {
    pub kind: ModelKind,
    pub encoding: FourierEncoding,
    pub standardizer: Standardizer,
    pub global: Option<GlobalEncoder<T>>,
    pub local: Option<Mlp<T>>,
    pub decoders: Vec<Mlp<T>>,
    pub trained: bool,
}

impl<T: Real> SisModel<T> {
    /// `vertex_count` is the template's original vertex count, used by the
    /// global encoder.
    pub fn new<R: Rng + ?Sized>(
        kind: ModelKind,
        parts: usize,
        vertex_count: usize,
        encoding: FourierEncoding,
        standardizer: Standardizer,
        rng: &mut R,
    ) -> Result<Self> {
        if parts == 0 {
            return Err(SisError::Config(
                "a model needs at least one submesh".into(),
            ));
        }
        let (global, local) = match kind {
            ModelKind::Global => (Some(GlobalEncoder::new(vertex_count, rng)?), None),
            _ => (None, Some(new_local_encoder(encoding.width(), rng)?)),
        };
        let dims = decoder_dims(kind.decoder_input_width(&encoding));
        let decoders = (0..parts)
            .map(|_| Mlp::new(&dims, Some(DECODER_SKIP), rng))
            .collect::<Result<Vec<_>>>()?;
        let model = SisModel {
            kind,
            encoding,
            standardizer,
            global,
            local,
            decoders,
            trained: false,
        };
        model.check_widths()?;
        Ok(model)
    }

    fn check_widths(&self) -> Result<()> {
        let want = self.kind.decoder_input_width(&self.encoding);
        if let Some(d) = self
            .decoders
            .iter()
            .find(|d| d.input_width() != want || d.output_width() != 3)
        {
            return Err(SisError::Dimension(format!(
                "decoder input {} but {:?} needs {want}",
                d.input_width(),
                self.kind
            )));
        }
        if let Some(l) = &self.local {
            if l.input_width() != 3 + self.encoding.width() || l.output_width() != LATENT_WIDTH {
                return Err(SisError::Dimension("local encoder widths".into()));
            }
        }
        if self.kind.is_local() != self.local.is_some()
            || self.kind.is_local() == self.global.is_some()
        {
            return Err(SisError::Config(format!(
                "encoders do not match {:?}",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn parts(&self) -> usize {
        self.decoders.len()
    }

    fn decoder(&self, part: usize) -> Result<&Mlp<T>> {
        if !self.trained {
            return Err(SisError::Untrained);
        }
        self.decoders
            .get(part)
            .ok_or_else(|| SisError::Dimension(format!("no decoder for submesh {part}")))
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut n = Vec::new();
        if let Some(g) = &self.global {
            n.extend(g.param_names("global/"));
        }
        if let Some(l) = &self.local {
            n.extend(l.param_names("local/"));
        }
        for (k, d) in self.decoders.iter().enumerate() {
            n.extend(d.param_names(&format!("decoder{k}/")));
        }
        n
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut t = Vec::new();
        if let Some(g) = &mut self.global {
            t.extend(g.tensors_mut());
        }
        if let Some(l) = &mut self.local {
            t.extend(l.tensors_mut());
        }
        for d in &mut self.decoders {
            t.extend(d.tensors_mut());
        }
        t
    }

    pub fn zero_grads(&self) -> SisGrads<T> {
        SisGrads {
            global: self.global.as_ref().map(GlobalEncoder::zero_grads),
            local: self.local.as_ref().map(Mlp::zero_grads),
            decoders: self.decoders.iter().map(Mlp::zero_grads).collect(),
        }
    }

    pub fn step(&mut self, opt: &mut AdamState<T>, grads: &SisGrads<T>) -> Result<()> {
        let names = self.param_names();
        let g = grads.tensors();
        opt.step(self.tensors_mut(), &g, &names)
    }

    pub fn cast<U: Real>(&self) -> SisModel<U> {
        SisModel {
            kind: self.kind,
            encoding: self.encoding,
            standardizer: self.standardizer,
            global: self.global.as_ref().map(GlobalEncoder::cast),
            local: self.local.as_ref().map(Mlp::cast),
            decoders: self.decoders.iter().map(Mlp::cast).collect(),
            trained: self.trained,
        }
    }

    fn encoded<U: Real>(&self, coords: &[SphericalCoord]) -> Vec<U> {
        let w = self.encoding.width();
        let mut out = vec![U::ZERO; coords.len() * w];
        for (c, row) in coords.iter().zip(out.chunks_exact_mut(w)) {
            self.encoding.encode_into(c, row);
        }
        out
    }

    fn to_vertices(out: &[T]) -> Vec<Vec3> {
        out.chunks_exact(3)
            .map(|r| Vec3::new(r[0].to_f64(), r[1].to_f64(), r[2].to_f64()))
            .collect()
    }

    fn global_encoder(&self) -> Result<&GlobalEncoder<T>> {
        self.global
            .as_ref()
            .ok_or_else(|| SisError::Config(format!("{:?} model has no global encoder", self.kind)))
    }

    fn local_encoder(&self) -> Result<&Mlp<T>> {
        self.local
            .as_ref()
            .ok_or_else(|| SisError::Config(format!("{:?} model has no local encoder", self.kind)))
    }

    /// `z_g` for a mesh in standardized units.
    pub fn encode_global(&self, xyz: &[Vec3]) -> Result<GlobalFeature<T>> {
        self.global_encoder()?.encode(&flatten(xyz))
    }

    /// Standardized vertex at `c` decoded from `z_g`.
    pub fn decode_vertex_global(
        &self,
        part: usize,
        z_g: &GlobalFeature<T>,
        c: &SphericalCoord,
    ) -> Result<Vec3> {
        Ok(self.decode_global(part, z_g, std::slice::from_ref(c))?[0])
    }

    pub fn decode_global(
        &self,
        part: usize,
        z_g: &GlobalFeature<T>,
        coords: &[SphericalCoord],
    ) -> Result<Vec<Vec3>> {
        let dec = self.decoder(part)?;
        if self.kind != ModelKind::Global || z_g.z_g.len() != LATENT_WIDTH {
            return Err(SisError::Dimension(
                "global feature does not fit this decoder".into(),
            ));
        }
        let xi: Vec<T> = self.encoded(coords);
        let x = prefix_rows(&z_g.z_g, &xi, self.encoding.width());
        Ok(Self::to_vertices(&dec.predict(&x, coords.len())?))
    }

    /// Local features of a sample given its standardized positions and
    /// sphere points.
    pub fn local_field(
        &self,
        xyz: &[Vec3],
        sphere_points: &[Vec3],
    ) -> Result<LocalFeatureField<T>> {
        let enc = self.local_encoder()?;
        let coords = sphere_points
            .iter()
            .map(crate::sphere_param::to_spherical_coords)
            .collect::<Result<Vec<_>>>()?;
        let tri = triangulate_unit_points(sphere_points)?;
        super::fusion::encode_local_features(enc, xyz, &coords, tri, &self.encoding)
    }

    /// Standardized vertex at `c` from a fused (or, without fusion, blended)
    /// feature.
    pub fn decode_vertex_local(
        &self,
        part: usize,
        z_l: &FusedFeature<T>,
        c: &SphericalCoord,
    ) -> Result<Vec3> {
        let dec = self.decoder(part)?;
        if !self.kind.is_local() || z_l.z_l.len() != self.kind.feature_width() {
            return Err(SisError::Dimension(format!(
                "feature of width {} for a {:?} decoder",
                z_l.z_l.len(),
                self.kind
            )));
        }
        let xi: Vec<T> = self.encoded(std::slice::from_ref(c));
        let x = prefix_rows(&z_l.z_l, &xi, self.encoding.width());
        Ok(Self::to_vertices(&dec.predict(&x, 1)?)[0])
    }

    /// Decodes every coordinate against a local feature field.
    pub fn decode_local(
        &self,
        part: usize,
        field: &LocalFeatureField<T>,
        coords: &[SphericalCoord],
    ) -> Result<Vec<Vec3>> {
        let dirs: Vec<Vec3> = coords.iter().map(from_spherical_coords).collect();
        self.decode_local_at(part, field, &dirs, coords)
    }

    /// [`SisModel::decode_local`] with the query directions given
    /// explicitly, e.g. the template's sphere points.
    pub fn decode_local_at(
        &self,
        part: usize,
        field: &LocalFeatureField<T>,
        dirs: &[Vec3],
        coords: &[SphericalCoord],
    ) -> Result<Vec<Vec3>> {
        let dec = self.decoder(part)?;
        if !self.kind.is_local() {
            return Err(SisError::Config(
                "global model cannot decode a local field".into(),
            ));
        }
        if dirs.len() != coords.len() {
            return Err(SisError::Dimension(
                "directions and coordinates differ in length".into(),
            ));
        }
        let located = dirs
            .iter()
            .map(|d| field.locate(d))
            .collect::<Result<Vec<_>>>()?;
        let xi: Vec<T> = self.encoded(coords);
        let x = decoder_rows(
            field,
            &located,
            self.kind == ModelKind::Local,
            &xi,
            self.encoding.width(),
        );
        Ok(Self::to_vertices(&dec.predict(&x, coords.len())?))
    }

    /// Loss and gradients of a global model on one mesh (`xyz` holds the
    /// standardized original vertices). Part losses are weighted by their
    /// row counts.
    pub fn global_item_grad(
        &self,
        parts: &[PartTemplate],
        xyz: &[Vec3],
        queries: &[PartQuery],
        gamma: f64,
        grads: &mut SisGrads<T>,
    ) -> Result<LossValue> {
        self.check_parts(parts, queries)?;
        let enc = self.global_encoder()?;
        let (z_g, cache) = enc.forward(&flatten(xyz))?;
        let total_rows: usize = queries.iter().map(|q| q.rows.len()).sum();
        let mut d_z = vec![T::ZERO; LATENT_WIDTH];
        let mut value = LossValue::default();
        let ew = self.encoding.width();
        for (k, (part, q)) in parts.iter().zip(queries).enumerate() {
            let target = flatten::<T>(&select(&part.gather(xyz), &q.rows));
            let x = prefix_rows(&z_g.z_g, &part.encoded_rows(&q.rows), ew);
            let weight = q.rows.len() as f64 / total_rows as f64;
            let d_in =
                self.decoder_pass(k, &x, &target, &q.plan, gamma, weight, grads, &mut value)?;
            let w = LATENT_WIDTH + ew;
            for r in 0..q.rows.len() {
                for j in 0..LATENT_WIDTH {
                    d_z[j] += d_in[r * w + j];
                }
            }
        }
        enc.backward(&cache, &d_z, grads.global.as_mut().expect("global grads"))?;
        Ok(value)
    }

    /// Loss and gradients of a local model on one mesh. `samples[k]` lists
    /// the part vertices fed to the encoder and `inputs[k]` their
    /// (possibly noisy) standardized positions; `xyz` supplies targets.
    pub fn local_item_grad(
        &self,
        parts: &[PartTemplate],
        xyz: &[Vec3],
        samples: &[Vec<usize>],
        inputs: &[Vec<Vec3>],
        queries: &[PartQuery],
        gamma: f64,
        grads: &mut SisGrads<T>,
    ) -> Result<LossValue> {
        self.check_parts(parts, queries)?;
        if samples.len() != parts.len() || inputs.len() != parts.len() {
            return Err(SisError::Dimension(
                "one sample set per submesh expected".into(),
            ));
        }
        let enc = self.local_encoder()?;
        let fuse = self.kind == ModelKind::Local;
        let total_rows: usize = queries.iter().map(|q| q.rows.len()).sum();
        let mut value = LossValue::default();
        let ew = self.encoding.width();
        for (k, part) in parts.iter().enumerate() {
            let (s, q) = (&samples[k], &queries[k]);
            let coords: Vec<SphericalCoord> = s.iter().map(|&i| part.coords[i]).collect();
            let x = local_encoder_input::<T>(&inputs[k], &coords, &self.encoding)?;
            let tri = triangulate_unit_points(&select(&part.points, s))?;
            let fwd = encode_local_features_train(enc, &x, tri)?;
            let located = q
                .rows
                .iter()
                .map(|&r| fwd.field.locate(&part.points[r]))
                .collect::<Result<Vec<Located>>>()?;
            let rows = decoder_rows(&fwd.field, &located, fuse, &part.encoded_rows(&q.rows), ew);
            let target = flatten::<T>(&select(&part.gather(xyz), &q.rows));
            let weight = q.rows.len() as f64 / total_rows as f64;
            let d_in =
                self.decoder_pass(k, &rows, &target, &q.plan, gamma, weight, grads, &mut value)?;
            let mut d_feat = vec![T::ZERO; fwd.field.features.len()];
            let rw = self.kind.decoder_input_width(&self.encoding);
            decoder_rows_backward(LATENT_WIDTH, &located, fuse, &d_in, rw, &mut d_feat);
            local_backward(
                enc,
                &fwd,
                &d_feat,
                grads.local.as_mut().expect("local grads"),
            )?;
        }
        Ok(value)
    }

    #[allow(clippy::too_many_arguments)]
    fn decoder_pass(
        &self,
        k: usize,
        x: &[T],
        target: &[T],
        plan: &LossPlan,
        gamma: f64,
        weight: f64,
        grads: &mut SisGrads<T>,
        value: &mut LossValue,
    ) -> Result<Vec<T>> {
        let dec = &self.decoders[k];
        let rows = target.len() / 3;
        let (pred, cache) = dec.forward(x, rows)?;
        let mut d_out = vec![T::ZERO; pred.len()];
        let v = plan.evaluate(&pred, target, gamma, Some(&mut d_out))?;
        let w = T::from_f64(weight);
        d_out.iter_mut().for_each(|g| *g *= w);
        value.rec += weight * v.rec;
        value.lap += weight * v.lap;
        value.total += weight * v.total;
        Ok(dec
            .backward(&cache, &d_out, &mut grads.decoders[k], true)?
            .expect("input gradient requested"))
    }

    fn check_parts(&self, parts: &[PartTemplate], queries: &[PartQuery]) -> Result<()> {
        if parts.len() != self.parts() || queries.len() != self.parts() {
            return Err(SisError::Dimension(format!(
                "model has {} decoders, got {} parts and {} query sets",
                self.parts(),
                parts.len(),
                queries.len()
            )));
        }
        for (p, q) in parts.iter().zip(queries) {
            if q.plan.rows() != q.rows.len() || q.rows.iter().any(|&r| r >= p.vertex_count()) {
                return Err(SisError::Dimension(
                    "query rows do not match the loss plan".into(),
                ));
            }
        }
        Ok(())
    }
}

impl SisModel<f32> {
    pub fn to_checkpoint(
        &self,
        optimizer: Option<AdamState<f32>>,
        extra: serde_json::Value,
    ) -> Result<Checkpoint> {
        let l = Some(self.encoding.l);
        let mut networks = Vec::new();
        if let Some(g) = &self.global {
            networks.push(NamedNetwork {
                name: "global/point".into(),
                encoding_l: None,
                net: g.point.clone(),
            });
            networks.push(NamedNetwork {
                name: "global/head".into(),
                encoding_l: None,
                net: g.head.clone(),
            });
        }
        if let Some(net) = &self.local {
            networks.push(NamedNetwork {
                name: "local".into(),
                encoding_l: l,
                net: net.clone(),
            });
        }
        for (k, d) in self.decoders.iter().enumerate() {
            networks.push(NamedNetwork {
                name: format!("decoder{k}"),
                encoding_l: l,
                net: d.clone(),
            });
        }
        let metadata = serde_json::json!({
            "kind": self.kind,
            "encoding_l": self.encoding.l,
            "standardizer": self.standardizer,
            "trained": self.trained,
            "global_vertex_count": self.global.as_ref().map(|g| g.vertex_count),
            "extra": extra,
        });
        Ok(Checkpoint {
            networks,
            optimizer,
            metadata,
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta = &ck.metadata;
        let field = |k: &str| {
            meta.get(k)
                .cloned()
                .ok_or_else(|| SisError::Checkpoint(format!("metadata lacks {k}")))
        };
        let kind: ModelKind = serde_json::from_value(field("kind")?)?;
        let encoding = FourierEncoding::new(serde_json::from_value(field("encoding_l")?)?);
        let standardizer: Standardizer = serde_json::from_value(field("standardizer")?)?;
        let trained: bool = serde_json::from_value(field("trained")?)?;
        let net = |name: &str| {
            ck.network(name)
                .cloned()
                .ok_or_else(|| SisError::Checkpoint(format!("missing network {name}")))
        };
        let global = if kind == ModelKind::Global {
            let vertex_count: usize = serde_json::from_value(field("global_vertex_count")?)?;
            Some(GlobalEncoder {
                vertex_count,
                point: net("global/point")?,
                head: net("global/head")?,
            })
        } else {
            None
        };
        let local = if kind.is_local() {
            Some(net("local")?)
        } else {
            None
        };
        let mut decoders = Vec::new();
        while let Some(d) = ck.network(&format!("decoder{}", decoders.len())) {
            decoders.push(d.clone());
        }
        if decoders.is_empty() {
            return Err(SisError::Checkpoint("checkpoint holds no decoders".into()));
        }
        let model = SisModel {
            kind,
            encoding,
            standardizer,
            global,
            local,
            decoders,
            trained,
        };
        model
            .check_widths()
            .map_err(|e| SisError::Checkpoint(e.to_string()))?;
        Ok(model)
    }
}

pub(crate) fn flatten<T: Real>(v: &[Vec3]) -> Vec<T> {
    v.iter()
        .flat_map(|p| [T::from_f64(p.x), T::from_f64(p.y), T::from_f64(p.z)])
        .collect()
}

fn select(v: &[Vec3], idx: &[usize]) -> Vec<Vec3> {
    idx.iter().map(|&i| v[i]).collect()
}

/// Rows of `prefix` followed by each row of `suffix`.
fn prefix_rows<T: Real>(prefix: &[T], suffix: &[T], suffix_width: usize) -> Vec<T> {
    let rows = suffix.len() / suffix_width;
    let mut x = Vec::with_capacity(rows * (prefix.len() + suffix_width));
    for r in 0..rows {
        x.extend_from_slice(prefix);
        x.extend_from_slice(&suffix[r * suffix_width..(r + 1) * suffix_width]);
    }
    x
}
