use super::{apply_stop, BackendError, GenerationRequest, GenerationResult, Generator};
use crate::model::{decode, DecodeMode, ToyModel};
use crate::seq::{format_corrector_input, TokenSeq};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ToyRole {
    /// The prompt is already a formatted corrector context.
    Corrector,
    /// The prompt is a task input; it is wrapped with an empty hypothesis.
    Generator,
}

/// Serves a toy model through the generation contract.
pub struct ToyBackend<'a> {
    pub model: &'a ToyModel,
    pub role: ToyRole,
}

impl<'a> ToyBackend<'a> {
    pub fn corrector(model: &'a ToyModel) -> Self {
        ToyBackend {
            model,
            role: ToyRole::Corrector,
        }
    }

    pub fn generator(model: &'a ToyModel) -> Self {
        ToyBackend {
            model,
            role: ToyRole::Generator,
        }
    }
}

impl Generator for ToyBackend<'_> {
    fn tag(&self) -> String {
        match self.role {
            ToyRole::Corrector => "toy-corrector".into(),
            ToyRole::Generator => "toy-generator".into(),
        }
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        request.validate()?;
        let context = match self.role {
            ToyRole::Corrector => request.prompt.clone(),
            ToyRole::Generator => format_corrector_input(&request.prompt, &TokenSeq::new(), None),
        };
        let stop = request.stop.as_deref();
        let sequences = match request.mode {
            DecodeMode::Beam(_) => {
                let beams = decode(self.model, &context, request.mode, request.max_len, &mut request.sample_stream(0));
                (0..request.n)
                    .map(|i| apply_stop(beams[i % beams.len()].clone(), stop))
                    .collect()
            }
            mode => (0..request.n)
                .map(|i| {
                    let mut rng = request.sample_stream(i);
                    let out = decode(self.model, &context, mode, request.max_len, &mut rng);
                    apply_stop(out.into_iter().next().unwrap_or_default(), stop)
                })
                .collect(),
        };
        Ok(GenerationResult {
            sequences,
            texts: None,
            backend_tag: self.tag(),
        })
    }
}
