//! In-process embedders for tests and offline runs.

use glam::DVec3;

use super::Embedder;
use crate::error::{Error, Result};
use crate::guidance::mock::named_color;
use crate::img::Image;

/// Looks embeddings up in explicit tables; images match by exact pixel equality.
#[derive(Debug, Clone, Default)]
pub struct TableEmbedder {
    texts: Vec<(String, Vec<f64>)>,
    images: Vec<(Image, Vec<f64>)>,
}

impl TableEmbedder {
    pub fn text(mut self, text: &str, v: Vec<f64>) -> Self {
        self.texts.push((text.to_string(), v));
        self
    }

    pub fn image(mut self, image: &Image, v: Vec<f64>) -> Self {
        self.images.push((image.clone(), v));
        self
    }
}

impl Embedder for TableEmbedder {
    fn embed_text(&mut self, text: &str) -> Result<Vec<f64>> {
        self.texts
            .iter()
            .find(|(t, _)| t == text)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::Backend(format!("no embedding for text {text:?}")))
    }

    fn embed_image(&mut self, image: &Image) -> Result<Vec<f64>> {
        self.images
            .iter()
            .find(|(i, _)| i == image)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::Backend("no embedding for image".into()))
    }
}

/// Embeds by colour: images by their mean display colour, texts by the last
/// colour word they contain. Text without a colour word embeds as mid gray.
#[derive(Debug, Clone, Copy, Default)]
pub struct ColorEmbedder;

fn color_vector(c: DVec3) -> Vec<f64> {
    // offset from mid gray plus a constant axis so no colour maps to zero
    let d = c - DVec3::splat(0.5);
    let v = [d.x, d.y, d.z, 0.25];
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

impl Embedder for ColorEmbedder {
    fn embed_text(&mut self, text: &str) -> Result<Vec<f64>> {
        Ok(color_vector(named_color(text).unwrap_or(DVec3::splat(0.5))))
    }

    fn embed_image(&mut self, image: &Image) -> Result<Vec<f64>> {
        if image.data.is_empty() {
            return Err(Error::Backend("cannot embed an empty image".into()));
        }
        Ok(color_vector(image.mean()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_embeddings_are_unit_and_agree_on_color() {
        let mut e = ColorEmbedder;
        let t = e.embed_text("a red chair").unwrap();
        let i = e.embed_image(&Image::new(3, 3, DVec3::new(0.8, 0.1, 0.1))).unwrap();
        assert!((t.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(t.iter().zip(&i).all(|(a, b)| (a - b).abs() < 1e-12));
        assert_ne!(t, e.embed_text("a blue chair").unwrap());
    }
}
