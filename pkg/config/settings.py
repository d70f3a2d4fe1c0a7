"""
Django settings for config project.

Generated by 'django-admin startproject' using Django 5.1.6.

For more information on this file, see
https://docs.djangoproject.com/en/5.1/topics/settings/

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.1/ref/settings/
"""

from pathlib import Path
from dotenv import load_dotenv
import logging
import os

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent
env_path = BASE_DIR / '.env'

if env_path.exists():
    load_dotenv(env_path)

SECRET_KEY = os.getenv('DJANGO_SECRET_KEY')

if not SECRET_KEY:
    # experiments run from the command line; only a served API needs a real key
    SECRET_KEY = 'msqnet-insecure-development-key'
    if os.environ.get('DJANGO_PRODUCTION') == 'True':
        raise ValueError("DJANGO_SECRET_KEY not found in environment variables")
    logging.getLogger(__name__).warning('DJANGO_SECRET_KEY not set, using the development key')

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = True

ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'django.contrib.staticfiles',
    'rest_framework',
    'drf_spectacular',
    'msqnet',
]

REST_FRAMEWORK = {
    'DEFAULT_RENDERER_CLASSES': (
        'rest_framework.renderers.JSONRenderer',
    ),
    'DEFAULT_PERMISSION_CLASSES': [
        'rest_framework.permissions.AllowAny',
    ],
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PAGINATION_CLASS': 'rest_framework.pagination.PageNumberPagination',
    'PAGE_SIZE': 10,
    'DEFAULT_SCHEMA_CLASS': 'drf_spectacular.openapi.AutoSchema',
}

SPECTACULAR_SETTINGS = {
    'TITLE': 'MSQNet experiment runs',
    'DESCRIPTION': 'Read-only access to recorded training, evaluation, zero-shot and ablation runs.',
    'SCHEMA_PATH_PREFIX': r'/api/',
    'VERSION': None,
}

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.middleware.common.CommonMiddleware',
]

ROOT_URLCONF = 'config.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.debug',
                'django.template.context_processors.request',
            ],
        },
    },
]

WSGI_APPLICATION = 'config.wsgi.application'


# Database
# https://docs.djangoproject.com/en/5.1/ref/settings/#databases

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

# Internationalization
# https://docs.djangoproject.com/en/5.1/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


# Static files (CSS, JavaScript, Images)
# https://docs.djangoproject.com/en/5.1/howto/static-files/

STATIC_URL = 'static/'

# Default primary key field type
# https://docs.djangoproject.com/en/5.1/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

MSQNET = {
    'OUTPUT_DIR': Path(os.getenv('MSQNET_OUTPUT_DIR', BASE_DIR / 'runs')),
    'CHECK_FINITE': os.getenv('MSQNET_CHECK_FINITE') == 'True',
    'LOG_LEVEL': os.getenv('MSQNET_LOG_LEVEL', 'INFO'),
    'ACCEPTANCE_TESTS': os.getenv('MSQNET_ACCEPTANCE') == '1',
}

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'msqnet': {
            'handlers': ['console'],
            'level': MSQNET['LOG_LEVEL'],
            'propagate': False,
        },
    },
}

if os.environ.get('DJANGO_PRODUCTION') == 'True':
    DEBUG = False
    ALLOWED_HOSTS = [os.environ.get('DJANGO_ALLOWED_HOSTS')]

    STATIC_ROOT = Path(os.environ.get('DJANGO_STATIC_ROOT'))

    # Security settings
    SECURE_BROWSER_XSS_FILTER = True
    X_FRAME_OPTIONS = 'DENY'
    SECURE_CONTENT_TYPE_NOSNIFF = True
    SECURE_SSL_REDIRECT = False

    LOGGING['handlers']['file'] = {
        'level': 'ERROR',
        'class': 'logging.FileHandler',
        'filename': os.environ.get('MSQNET_LOG_FILE', '/var/log/msqnet/django.log'),
        'formatter': 'simple',
    }
    LOGGING['loggers']['django'] = {
        'handlers': ['file'],
        'level': 'ERROR',
        'propagate': True,
    }
    LOGGING['loggers']['msqnet']['handlers'].append('file')

    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.sqlite3',
            'NAME': os.getenv('DJANGO_DB_PATH'),
        }
    }
