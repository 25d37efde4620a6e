"""Exception types shared by every module.

Each carries a short machine-readable ``code`` which the CLI copies into its
JSON error payload.
"""


class NVSError(ValueError):
    code = "error"


class DomainError(NVSError):
    code = "domain_error"


class ContractError(NVSError):
    code = "contract_error"


class BehindCameraError(NVSError):
    code = "behind_camera"


class DegenerateCloudError(NVSError):
    code = "degenerate_cloud"


class SceneTooLargeError(NVSError):
    code = "scene_too_large"
