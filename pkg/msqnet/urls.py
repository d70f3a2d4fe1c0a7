from django.urls import path, include

urlpatterns = [
    path('v1/', include('msqnet.v1.urls')),
]
