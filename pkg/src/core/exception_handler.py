"""CLI 全局异常处理器
- EstimationError 映射为对应 ErrorCode 的退出码
- pydantic 配置校验错误映射为配置错误 (退出码 2)
- 未捕获异常记录堆栈并以退出码 1 结束
"""
import logging
from functools import wraps
from typing import Any, Callable

import click
import typer
from pydantic import ValidationError
from rich.console import Console

from core.error_codes import ErrorCode
from core.exceptions import EstimationError

logger = logging.getLogger(__name__)
error_console = Console(stderr=True)


def estimation_error_exit(exc: EstimationError) -> typer.Exit:
    """处理估计流程异常：输出消息并返回带退出码的 typer.Exit"""
    logger.warning(f"估计异常: {exc.message} | Code: {exc.error_code.code}")
    error_console.print(f"[red]error[{exc.error_code.code}]:[/red] {exc.message}", highlight=False)
    return typer.Exit(exc.error_code.exit_code)


def validation_error_exit(exc: ValidationError) -> typer.Exit:
    """处理配置校验错误"""
    messages = []
    for error in exc.errors():
        field = ".".join(str(part) for part in error.get("loc", ()))
        msg = error.get("msg", "验证失败")
        messages.append(f"{field}: {msg}" if field else msg)
    error_msg = "; ".join(messages)
    logger.warning(f"配置验证失败: {error_msg}")
    error_console.print(f"[red]error[{ErrorCode.CONFIG_ERROR.code}]:[/red] {error_msg}", highlight=False)
    return typer.Exit(ErrorCode.CONFIG_ERROR.exit_code)


def handle_cli_errors(func: Callable) -> Callable:
    """命令装饰器：注册所有异常处理逻辑"""
    @wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except EstimationError as exc:
            raise estimation_error_exit(exc) from exc
        except ValidationError as exc:
            raise validation_error_exit(exc) from exc
        except (typer.Exit, click.exceptions.ClickException, click.exceptions.Abort):
            raise
        except Exception as exc:
            logger.error(f"未处理的系统异常: {str(exc)}", exc_info=True)
            error_console.print(f"[red]internal error:[/red] {exc}")
            raise typer.Exit(1) from exc
    return wrapper
