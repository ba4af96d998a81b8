use serde::{Deserialize, Serialize};

/// Communication counted in scalars (parameters or latent coordinates).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Traffic {
    pub model_upload: u64,
    pub model_download: u64,
    pub decoder_upload: u64,
    pub decoder_download: u64,
    pub latent_upload: u64,
    pub latent_download: u64,
    /// First-time decoder downloads (one per client at most).
    pub decoder_download_events: u64,
}

impl Traffic {
    pub fn uploaded(&self) -> u64 {
        self.model_upload + self.decoder_upload + self.latent_upload
    }

    pub fn downloaded(&self) -> u64 {
        self.model_download + self.decoder_download + self.latent_download
    }

    pub fn total(&self) -> u64 {
        self.uploaded() + self.downloaded()
    }

    pub fn latent(&self) -> u64 {
        self.latent_upload + self.latent_download
    }

    /// Per-category difference `self − earlier`.
    pub fn since(&self, earlier: &Traffic) -> Traffic {
        Traffic {
            model_upload: self.model_upload - earlier.model_upload,
            model_download: self.model_download - earlier.model_download,
            decoder_upload: self.decoder_upload - earlier.decoder_upload,
            decoder_download: self.decoder_download - earlier.decoder_download,
            latent_upload: self.latent_upload - earlier.latent_upload,
            latent_download: self.latent_download - earlier.latent_download,
            decoder_download_events: self.decoder_download_events - earlier.decoder_download_events,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_sum_to_total() {
        let t = Traffic {
            model_upload: 1,
            model_download: 2,
            decoder_upload: 3,
            decoder_download: 4,
            latent_upload: 5,
            latent_download: 6,
            decoder_download_events: 1,
        };
        assert_eq!(t.total(), 21);
        assert_eq!(t.since(&Traffic::default()), t);
        assert_eq!(t.since(&t).total(), 0);
    }
}
