import os
import yaml
from typing import List, Union, Dict, Any
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict, PydanticBaseSettingsSource

CONFIG_ENV_VAR = "CQR_CONFIG"
DEFAULT_CONFIG_FILE = "config.yaml"


def load_yaml_config(config_file: str) -> Dict[str, Any]:
    """读取 YAML 配置文件并扁平化，文件不存在时返回空字典"""
    if not config_file or not os.path.exists(config_file):
        return {}
    with open(config_file, 'r', encoding='utf-8') as f:
        data = yaml.safe_load(f) or {}
    return flatten_config(data)


def flatten_config(d: Dict[str, Any], parent_key: str = '', sep: str = '_') -> Dict[str, Any]:
    items = []
    for k, v in d.items():
        new_key = f"{parent_key}{sep}{k}" if parent_key else k
        if isinstance(v, dict):
            items.extend(flatten_config(v, new_key, sep=sep).items())
        else:
            items.append((new_key, v))
    return dict(items)


class YamlConfigSettingsSource(PydanticBaseSettingsSource):
    """
    A simple settings source that reads from a config.yaml file.
    It flattens the nested YAML structure to match the flat settings fields.
    e.g., {"smoother": {"grid_size": 64}} -> {"smoother_grid_size": 64}
    The file path can be overridden with the CQR_CONFIG environment variable.
    """
    def __init__(self, settings_cls):
        super().__init__(settings_cls)
        config_file = os.getenv(CONFIG_ENV_VAR, DEFAULT_CONFIG_FILE)
        self.data = load_yaml_config(config_file)
        self.data = {k: os.path.expanduser(v) if isinstance(v, str) else v for k, v in self.data.items()}

    def get_field_value(
        self, field: Field, field_name: str
    ) -> tuple[Any, str, bool]:
        field_alias = field.validation_alias or field_name
        if field_alias in self.data:
            return self.data[field_alias], field_alias, True
        return None, field_name, False

    def __call__(self) -> Dict[str, Any]:
        return self.data


DEFAULT_FAMILIES = [
    "independence", "gaussian", "frank",
    "clayton", "clayton@90", "clayton@180", "clayton@270",
    "gumbel", "gumbel@90", "gumbel@180", "gumbel@270",
    "joe", "joe@90", "joe@180", "joe@270",
]


class Settings(BaseSettings):
    # Logging
    logging_level: str = Field("INFO", validation_alias="logging_level")
    logging_format: str = Field("%(asctime)s - %(name)s - %(levelname)s - %(message)s", validation_alias="logging_format")
    logging_datefmt: str = Field("%Y-%m-%d %H:%M:%S", validation_alias="logging_datefmt")
    logging_file: str = Field("", validation_alias="logging_file")

    # Pair copulas
    paircop_eps_u: float = Field(1e-10, validation_alias="paircop_eps_u")
    paircop_ml_xtol: float = Field(1e-9, validation_alias="paircop_ml_xtol")
    paircop_families: Union[str, List[str]] = Field(DEFAULT_FAMILIES, validation_alias="paircop_families")

    # Smoother
    smoother_grid_size: int = Field(64, validation_alias="smoother_grid_size")
    smoother_z_max: float = Field(3.2, validation_alias="smoother_z_max")
    smoother_newton_max_iter: int = Field(25, validation_alias="smoother_newton_max_iter")
    smoother_newton_tol: float = Field(1e-6, validation_alias="smoother_newton_tol")
    smoother_quadrature_nodes: int = Field(16, validation_alias="smoother_quadrature_nodes")
    smoother_nn_fractions: Union[str, List[float]] = Field([0.3, 0.45, 0.6, 0.8, 1.0], validation_alias="smoother_nn_fractions")
    smoother_cv_folds: int = Field(5, validation_alias="smoother_cv_folds")
    smoother_cv_grid_size: int = Field(32, validation_alias="smoother_cv_grid_size")
    smoother_fold_seed: int = Field(0, validation_alias="smoother_fold_seed")
    smoother_min_n: int = Field(20, validation_alias="smoother_min_n")

    # Survival
    survival_weight_floor: float = Field(1e-3, validation_alias="survival_weight_floor")
    survival_cox_ridge: float = Field(1e-8, validation_alias="survival_cox_ridge")
    survival_cox_tol: float = Field(1e-8, validation_alias="survival_cox_tol")
    survival_cox_max_iter: int = Field(50, validation_alias="survival_cox_max_iter")
    survival_cox_baseline: str = Field("exponential", validation_alias="survival_cox_baseline")

    # Vine
    vine_min_n: int = Field(30, validation_alias="vine_min_n")

    # Estimator
    cqr_min_events: int = Field(30, validation_alias="cqr_min_events")
    cqr_workers: int = Field(1, validation_alias="cqr_workers")

    # Simulation laboratory
    simlab_workers: int = Field(1, validation_alias="simlab_workers")
    simlab_n_eval: int = Field(10, validation_alias="simlab_n_eval")
    simlab_max_excluded_fraction: float = Field(0.02, validation_alias="simlab_max_excluded_fraction")

    model_config = SettingsConfigDict(extra="ignore", populate_by_name=True)

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        return (
            init_settings,
            env_settings,
            dotenv_settings,
            file_secret_settings,
            YamlConfigSettingsSource(settings_cls),
        )

    def _to_list(self, value: Union[str, List[Any]]) -> List[str]:
        if isinstance(value, str):
            return [item.strip() for item in value.split(',') if item.strip()]
        return list(value)

    def get_families(self) -> List[str]:
        return self._to_list(self.paircop_families)

    def get_nn_fractions(self) -> List[float]:
        return [float(x) for x in self._to_list(self.smoother_nn_fractions)]


def load_settings(config_file: str | None = None, **overrides: Any) -> Settings:
    """
    构建 Settings 实例
    - config_file 指定时，其内容作为初始化参数（优先级高于默认 config.yaml）
    - overrides 优先级最高（CLI 参数）
    """
    values: Dict[str, Any] = {}
    if config_file:
        values.update(load_yaml_config(config_file))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return Settings(**values)


settings = Settings()
