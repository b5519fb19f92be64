//! Embedding-based scores for an edit: how well the edited renders match the
//! target text (global), and how well the change in the renders follows the
//! change in the text (directional).

pub mod mock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::img::Image;

/// Number of turntable views a multi-view report averages over.
pub const EVAL_VIEWS: usize = 8;

/// Joint text/image embedding into a shared space of fixed dimension.
pub trait Embedder {
    fn embed_text(&mut self, text: &str) -> Result<Vec<f64>>;
    fn embed_image(&mut self, image: &Image) -> Result<Vec<f64>>;
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn embed_text(&mut self, text: &str) -> Result<Vec<f64>> {
        (**self).embed_text(text)
    }
    fn embed_image(&mut self, image: &Image) -> Result<Vec<f64>> {
        (**self).embed_image(image)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn unit(v: &[f64], what: &'static str) -> Result<Vec<f64>> {
    let n = norm(v);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::DegenerateDirection(what));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape {
            expected: vec![a.len()],
            actual: vec![b.len()],
        });
    }
    Ok(())
}

/// Cosine similarity of two vectors, each normalized first.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    let (a, b) = (unit(a, "zero-length embedding")?, unit(b, "zero-length embedding")?);
    Ok(a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0))
}

/// Cosine of the two edit directions `ΔI = I_tgt − I_src`, `ΔT = T_tgt − T_src`,
/// computed from normalized embeddings.
pub fn direction_cosine(img_src: &[f64], img_tgt: &[f64], text_src: &[f64], text_tgt: &[f64]) -> Result<f64> {
    check_dims(img_src, img_tgt)?;
    check_dims(text_src, text_tgt)?;
    check_dims(img_src, text_src)?;
    let diff = |a: &[f64], b: &[f64], what| -> Result<Vec<f64>> {
        let (a, b) = (unit(a, "zero-length embedding")?, unit(b, "zero-length embedding")?);
        let d: Vec<f64> = b.iter().zip(&a).map(|(y, x)| y - x).collect();
        unit(&d, what).map(|_| d)
    };
    let di = diff(img_src, img_tgt, "source and target images embed identically")?;
    let dt = diff(text_src, text_tgt, "source and target texts embed identically")?;
    cosine(&di, &dt)
}

/// Similarity between an image and a text.
pub fn global_score(emb: &mut dyn Embedder, image: &Image, text: &str) -> Result<f64> {
    let i = emb.embed_image(image)?;
    let t = emb.embed_text(text)?;
    cosine(&i, &t)
}

/// Agreement between the image edit direction and the text edit direction.
pub fn directional_score(
    emb: &mut dyn Embedder,
    img_src: &Image,
    img_tgt: &Image,
    text_src: &str,
    text_tgt: &str,
) -> Result<f64> {
    let (ts, tt) = (emb.embed_text(text_src)?, emb.embed_text(text_tgt)?);
    let (is, it) = (emb.embed_image(img_src)?, emb.embed_image(img_tgt)?);
    direction_cosine(&is, &it, &ts, &tt)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewScore {
    pub view: usize,
    pub global: f64,
    /// `None` when the edit left this view's embedding unchanged (for
    /// example a face seen from behind); such views have no image direction.
    pub directional: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub global: f64,
    /// Mean over the views whose embedding changed.
    pub directional: f64,
    pub per_view: Vec<ViewScore>,
    pub source_prompt: String,
    pub target_prompt: String,
    pub views: usize,
}

/// Scores paired before/after renders of the same views and averages them.
/// The text embeddings are computed once. Views the edit did not change are
/// left out of the directional mean; if no view changed, or the two texts
/// embed identically, the direction is degenerate and an error is returned.
pub fn score_views(
    emb: &mut dyn Embedder,
    before: &[Image],
    after: &[Image],
    source_prompt: &str,
    target_prompt: &str,
) -> Result<ScoreReport> {
    if before.is_empty() || before.len() != after.len() {
        return Err(Error::Config(format!(
            "need matching non-empty view sets, got {} before and {} after",
            before.len(),
            after.len()
        )));
    }
    let ts = emb.embed_text(source_prompt)?;
    let tt = emb.embed_text(target_prompt)?;
    if unit(&ts, "zero-length embedding")? == unit(&tt, "zero-length embedding")? {
        return Err(Error::DegenerateDirection("source and target texts embed identically"));
    }
    let mut per_view = Vec::with_capacity(before.len());
    for (view, (b, a)) in before.iter().zip(after).enumerate() {
        let (is, it) = (emb.embed_image(b)?, emb.embed_image(a)?);
        per_view.push(ViewScore {
            view,
            global: cosine(&it, &tt)?,
            directional: match direction_cosine(&is, &it, &ts, &tt) {
                Err(Error::DegenerateDirection(_)) => None,
                r => Some(r?),
            },
        });
    }
    let n = per_view.len() as f64;
    let moved: Vec<f64> = per_view.iter().filter_map(|v| v.directional).collect();
    if moved.is_empty() {
        return Err(Error::DegenerateDirection("source and target images embed identically in every view"));
    }
    Ok(ScoreReport {
        global: per_view.iter().map(|v| v.global).sum::<f64>() / n,
        directional: moved.iter().sum::<f64>() / moved.len() as f64,
        views: per_view.len(),
        per_view,
        source_prompt: source_prompt.to_string(),
        target_prompt: target_prompt.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::mock::TableEmbedder;
    use super::*;
    use glam::DVec3;

    fn img(v: f64) -> Image {
        Image::new(2, 2, DVec3::splat(v))
    }

    #[test]
    fn global_table() {
        let mut e = TableEmbedder::default()
            .text("same", vec![0.0, 1.0])
            .text("ortho", vec![1.0, 0.0])
            .text("x", vec![1.0, 0.0])
            .image(&img(0.0), vec![0.0, 1.0])
            .image(&img(1.0), vec![0.6, 0.8]);
        assert!((global_score(&mut e, &img(0.0), "same").unwrap() - 1.0).abs() < 1e-12);
        assert!(global_score(&mut e, &img(0.0), "ortho").unwrap().abs() < 1e-12);
        assert!((global_score(&mut e, &img(1.0), "x").unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn directional_table_and_symmetries() {
        let mut e = TableEmbedder::default()
            .text("src", vec![1.0, 0.0, 0.0])
            .text("tgt", vec![0.0, 1.0, 0.0])
            .image(&img(0.0), vec![1.0, 0.0, 0.0])
            .image(&img(1.0), vec![0.0, 1.0, 0.0]);
        let (a, b) = (img(0.0), img(1.0));
        let d = |e: &mut TableEmbedder, x: &Image, y: &Image, s, t| directional_score(e, x, y, s, t).unwrap();
        assert!((d(&mut e, &a, &b, "src", "tgt") - 1.0).abs() < 1e-12);
        assert!((d(&mut e, &b, &a, "src", "tgt") + 1.0).abs() < 1e-12);
        assert!((d(&mut e, &b, &a, "tgt", "src") - 1.0).abs() < 1e-12);
        assert!(matches!(
            directional_score(&mut e, &a, &b, "src", "src"),
            Err(Error::DegenerateDirection(_))
        ));
        assert!(matches!(
            directional_score(&mut e, &a, &a, "src", "tgt"),
            Err(Error::DegenerateDirection(_))
        ));
    }

    #[test]
    fn scale_invariant() {
        let a = [0.3, -0.2, 0.9];
        let b = [0.5, 0.5, 0.1];
        let c = cosine(&a, &b).unwrap();
        let scaled: Vec<f64> = a.iter().map(|x| x * 17.0).collect();
        assert!((cosine(&scaled, &b).unwrap() - c).abs() < 1e-12);
        let d0 = direction_cosine(&a, &b, &b, &a).unwrap();
        let d1 = direction_cosine(&scaled, &b, &b, &scaled).unwrap();
        assert!((d0 - d1).abs() < 1e-12);
    }

    #[test]
    fn report_averages_views() {
        let mut e = TableEmbedder::default()
            .text("src", vec![1.0, 0.0])
            .text("tgt", vec![0.0, 1.0])
            .image(&img(0.0), vec![1.0, 0.0])
            .image(&img(0.5), vec![1.0, 1.0])
            .image(&img(1.0), vec![0.0, 1.0]);
        let r = score_views(&mut e, &[img(0.0), img(0.0)], &[img(1.0), img(0.5)], "src", "tgt").unwrap();
        assert_eq!(r.views, 2);
        let half = std::f64::consts::FRAC_1_SQRT_2;
        assert!((r.global - (1.0 + half) / 2.0).abs() < 1e-12);
        // the second view turns by 22.5° away from the text direction
        let expected = (1.0 + (std::f64::consts::PI / 8.0).cos()) / 2.0;
        assert!((r.directional - expected).abs() < 1e-12);
        assert!(score_views(&mut e, &[], &[], "src", "tgt").is_err());
    }

    #[test]
    fn unchanged_views_leave_the_directional_mean() {
        let mut e = TableEmbedder::default()
            .text("src", vec![1.0, 0.0])
            .text("tgt", vec![0.0, 1.0])
            .image(&img(0.0), vec![1.0, 0.0])
            .image(&img(1.0), vec![0.0, 1.0]);
        let r = score_views(&mut e, &[img(0.0), img(0.0)], &[img(1.0), img(0.0)], "src", "tgt").unwrap();
        assert_eq!(r.per_view[1].directional, None);
        assert!((r.directional - 1.0).abs() < 1e-12);
        assert!((r.global - 0.5).abs() < 1e-12);
        assert!(matches!(
            score_views(&mut e, &[img(0.0)], &[img(0.0)], "src", "tgt"),
            Err(Error::DegenerateDirection(_))
        ));
        assert!(matches!(
            score_views(&mut e, &[img(0.0)], &[img(1.0)], "src", "src"),
            Err(Error::DegenerateDirection(_))
        ));
    }
}
