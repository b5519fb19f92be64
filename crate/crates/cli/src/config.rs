use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use reltex_core::guidance::GuidanceConfig;
use reltex_core::optimize::OptimizeConfig;

use crate::failure::Failure;

/// Everything a command needs, as read from the TOML file and then
/// overridden by command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub scene: SceneConfig,
    pub prompts: Prompts,
    pub guidance: GuidanceConfig,
    pub optimize: OptimizeConfig,
    pub render: RenderConfig,
    pub output: PathBuf,
    /// `mock:<name>` or `sidecar:<endpoint>`.
    pub backend: String,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            prompts: Prompts::default(),
            guidance: GuidanceConfig::default(),
            optimize: OptimizeConfig::default(),
            render: RenderConfig::default(),
            output: PathBuf::from("out"),
            backend: "mock:color".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Prompts {
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// `builtin:sphere|quad|cube` or a path to an OBJ file.
    pub mesh: String,
    pub kd: Option<PathBuf>,
    pub orm: Option<PathBuf>,
    pub normal: Option<PathBuf>,
    /// Resolution of material maps created from constants.
    pub texture_res: usize,
    pub base_color: [f64; 3],
    pub roughness: f64,
    pub metalness: f64,
    /// `builtin:studio|sky`, `constant:r,g,b`, or a path to an equirect `.hdr`.
    pub env: String,
    /// Cube-face resolution of the environment map.
    pub env_res: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            mesh: "builtin:sphere".into(),
            kd: None,
            orm: None,
            normal: None,
            texture_res: 256,
            base_color: [0.5, 0.5, 0.5],
            roughness: 0.5,
            metalness: 0.0,
            env: "builtin:studio".into(),
            env_res: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub resolution: usize,
    /// Turntable view count for `render`.
    pub views: usize,
    pub elevation: f64,
    pub radius: f64,
    pub fov: f64,
    pub background: [f64; 3],
    pub lut_res: usize,
    pub lut_samples: u32,
    pub lut_seed: u64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            resolution: 512,
            views: 8,
            elevation: 20.0,
            radius: 3.0,
            fov: 45.0,
            background: [0.0, 0.0, 0.0],
            lut_res: 64,
            lut_samples: 512,
            lut_seed: 0,
        }
    }
}

/// Flag values that override the file; `None` leaves the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub backend: Option<String>,
    pub source: Option<String>,
    pub target: Option<String>,
    pub mesh: Option<String>,
    pub env: Option<String>,
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
    pub resolution: Option<usize>,
    pub train_resolution: Option<usize>,
    pub views: Option<usize>,
}

impl ProjectConfig {
    /// Defaults, then the file (if any), then flags.
    pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<Self, Failure> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", p.display())))?;
                let mut cfg: ProjectConfig = toml::from_str(&text)
                    .map_err(|e| Failure::Config(format!("{}: {}", p.display(), e.message())))?;
                cfg.resolve_paths(p.parent().unwrap_or(Path::new(".")));
                cfg
            }
            None => ProjectConfig::default(),
        };
        cfg.apply(flags);
        cfg.sync_prompts()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.scene.kd, &mut self.scene.orm, &mut self.scene.normal]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut self.output);
        for s in [&mut self.scene.mesh, &mut self.scene.env] {
            if !s.contains(':') && Path::new(s.as_str()).is_relative() {
                *s = base.join(s.as_str()).to_string_lossy().into_owned();
            }
        }
    }

    fn apply(&mut self, f: &Overrides) {
        if let Some(v) = &f.output {
            self.output = v.clone();
        }
        if let Some(v) = &f.backend {
            self.backend = v.clone();
        }
        if let Some(v) = &f.source {
            self.prompts.source = v.clone();
        }
        if let Some(v) = &f.target {
            self.prompts.target = v.clone();
        }
        if let Some(v) = &f.mesh {
            self.scene.mesh = v.clone();
        }
        if let Some(v) = &f.env {
            self.scene.env = v.clone();
        }
        if let Some(v) = f.seed {
            self.optimize.seed = v;
        }
        if let Some(v) = f.iterations {
            self.optimize.iterations = v;
        }
        if let Some(v) = f.resolution {
            self.render.resolution = v;
        }
        if let Some(v) = f.train_resolution {
            self.optimize.resolution = v;
        }
        if let Some(v) = f.views {
            self.render.views = v;
        }
    }

    /// The `[prompts]` table is the single source of the prompts; the guidance
    /// table may repeat them only if they agree.
    fn sync_prompts(&mut self) -> Result<(), Failure> {
        let g = &mut self.guidance;
        for (name, from_guidance, from_prompts) in [
            ("source", &mut g.source_prompt, &self.prompts.source),
            ("target", &mut g.target_prompt, &self.prompts.target),
        ] {
            if !from_guidance.is_empty() && from_guidance != from_prompts {
                return Err(Failure::Config(format!(
                    "{name} prompt given in both [prompts] and [guidance] with different values"
                )));
            }
            *from_guidance = from_prompts.clone();
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let s = &self.scene;
        if s.texture_res == 0 || s.env_res == 0 {
            return Err(Failure::Config("texture_res and env_res must be positive".into()));
        }
        if !(0.0..=1.0).contains(&s.roughness) || !(0.0..=1.0).contains(&s.metalness) {
            return Err(Failure::Config("roughness and metalness must lie in [0, 1]".into()));
        }
        let r = &self.render;
        if r.resolution == 0 || r.views == 0 {
            return Err(Failure::Config("render resolution and views must be positive".into()));
        }
        if !(r.radius > 0.0 && r.fov > 0.0 && r.fov < 180.0 && r.elevation.abs() < 90.0) {
            return Err(Failure::Config("render camera out of range".into()));
        }
        self.guidance.validate()?;
        Ok(())
    }

    /// Checks needed before any command that queries the predictor.
    pub fn validate_for_training(&self) -> Result<(), Failure> {
        self.validate()?;
        self.optimize.validate()?;
        self.guidance.validate_prompts()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("project.toml");
        std::fs::write(
            &path,
            r#"
output = "edits"
[prompts]
source = "a gray ball"
target = "a red ball"
[optimize]
iterations = 20
seed = 4
[render]
views = 3
"#,
        )
        .unwrap();
        let flags = Overrides {
            iterations: Some(7),
            ..Default::default()
        };
        let cfg = ProjectConfig::load(Some(&path), &flags).unwrap();
        assert_eq!(cfg.optimize.iterations, 7);
        assert_eq!(cfg.optimize.seed, 4);
        assert_eq!(cfg.render.views, 3);
        assert_eq!(cfg.render.resolution, 512);
        assert_eq!(cfg.output, dir.path().join("edits"));
        assert_eq!(cfg.guidance.target_prompt, "a red ball");
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "[render]\nresolutoin = 5\n").unwrap();
        let err = ProjectConfig::load(Some(&path), &Overrides::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn conflicting_prompts_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.toml");
        std::fs::write(&path, "[prompts]\ntarget = \"a\"\n[guidance]\ntarget_prompt = \"b\"\n").unwrap();
        assert!(ProjectConfig::load(Some(&path), &Overrides::default()).is_err());
    }
}
